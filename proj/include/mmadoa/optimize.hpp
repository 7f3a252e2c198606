#pragma once

#include <functional>
#include <vector>

namespace mmadoa {

struct SimplexResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Minimises f with the Nelder-Mead simplex (GSL nmsimplex2), starting from
/// x0 with initial step sizes `step`. Stops when the simplex size drops below
/// `tolerance` or after `max_iterations`. f must return finite values.
SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                          const std::vector<double>& step, double tolerance = 1e-6, int max_iterations = 500);

}  // namespace mmadoa
