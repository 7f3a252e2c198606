#include "mmadoa/optimize.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace mmadoa {

namespace {

using Objective = std::function<double(const std::vector<double>&)>;

struct Callback {
    const Objective* f;
    std::vector<double> scratch;
};

double trampoline(const gsl_vector* v, void* params)
{
    auto* cb = static_cast<Callback*>(params);
    for (std::size_t i = 0; i < cb->scratch.size(); ++i) cb->scratch[i] = gsl_vector_get(v, i);
    const double value = (*cb->f)(cb->scratch);
    return std::isfinite(value) ? value : 1e300;
}

struct VectorDeleter {
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct MinimizerDeleter {
    void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

}  // namespace

SimplexResult nelder_mead(const Objective& f, std::vector<double> x0, const std::vector<double>& step, double tolerance,
                          int max_iterations)
{
    const std::size_t n = x0.size();
    if (n == 0 || step.size() != n) throw std::invalid_argument("nelder_mead: dimension mismatch");

    // GSL's default handler aborts; errors are reported through status codes.
    static const gsl_error_handler_t* const previous = gsl_set_error_handler_off();
    (void)previous;

    Callback cb{&f, std::vector<double>(n)};
    gsl_multimin_function func{&trampoline, n, &cb};
    std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(n));
    std::unique_ptr<gsl_vector, VectorDeleter> ss(gsl_vector_alloc(n));
    for (std::size_t i = 0; i < n; ++i) {
        gsl_vector_set(x.get(), i, x0[i]);
        gsl_vector_set(ss.get(), i, step[i]);
    }
    std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> s(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
    SimplexResult result;
    if (gsl_multimin_fminimizer_set(s.get(), &func, x.get(), ss.get()) != GSL_SUCCESS) {
        result.x = std::move(x0);
        result.value = f(result.x);
        return result;
    }
    int status = GSL_CONTINUE;
    int iter = 0;
    while (status == GSL_CONTINUE && iter < max_iterations) {
        ++iter;
        if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) break;
        status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s.get()), tolerance);
    }
    result.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.x[i] = gsl_vector_get(s->x, i);
    result.value = s->fval;
    result.iterations = iter;
    result.converged = status == GSL_SUCCESS;
    return result;
}

}  // namespace mmadoa
