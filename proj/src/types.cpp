#include "mmadoa/types.hpp"

#include <cmath>

namespace mmadoa {

double wrap_pi(double angle)
{
    double w = std::fmod(angle + kPi, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    return w - kPi;
}

double wrap_two_pi(double angle)
{
    double w = std::fmod(angle, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    if (w >= kTwoPi) w = 0.0;
    return w;
}

Direction Direction::on_sphere(double theta, double phi)
{
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    if (t > kPi) {
        t = kTwoPi - t;
        phi += kPi;
    }
    return {t, wrap_two_pi(phi)};
}

Direction Direction::normalized(Geometry geometry) const
{
    return geometry == Geometry::Planar ? planar(theta) : on_sphere(theta, phi);
}

}  // namespace mmadoa
