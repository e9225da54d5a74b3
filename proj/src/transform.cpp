#include "kinfit/transform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kinfit/error.hpp"

namespace kinfit {

Transform Transform::sinusoidal(double a, double b) {
    if (!(a < b)) throw DomainError("sinusoidal transform requires lower < upper");
    return {Kind::sinusoidal, a, b, 0.0};
}

std::string Transform::to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
        case Kind::identity: return {};
        case Kind::exponential: return "exp";
        case Kind::sinusoidal: os << "sin(" << lower << "," << upper << ")"; break;
        case Kind::root_square_upper: os << "sqrtu(" << bound << ")"; break;
        case Kind::root_square_lower: os << "sqrtl(" << bound << ")"; break;
    }
    return os.str();
}

namespace {

// 1 - sqrt(1 + u^2), written to avoid cancellation for small u.
double one_minus_hypot(double u) {
    return -u * u / (1.0 + std::sqrt(1.0 + u * u));
}

}  // namespace

double transform_forward(const Transform& t, double u) {
    switch (t.kind) {
        case Transform::Kind::identity: return u;
        case Transform::Kind::exponential: return std::exp(u);
        case Transform::Kind::sinusoidal:
            return t.lower + 0.5 * (t.upper - t.lower) * (1.0 + std::sin(u));
        case Transform::Kind::root_square_upper: return t.bound + one_minus_hypot(u);
        case Transform::Kind::root_square_lower: return t.bound - one_minus_hypot(u);
    }
    return u;
}

double transform_backward(const Transform& t, double p) {
    switch (t.kind) {
        case Transform::Kind::identity: return p;
        case Transform::Kind::exponential:
            if (!(p > 0.0)) throw DomainError("exponential transform needs p > 0");
            return std::log(p);
        case Transform::Kind::sinusoidal: {
            if (p < t.lower || p > t.upper)
                throw DomainError("sinusoidal transform needs lower <= p <= upper");
            const double s = std::clamp(2.0 * (p - t.lower) / (t.upper - t.lower) - 1.0, -1.0, 1.0);
            return std::asin(s);
        }
        case Transform::Kind::root_square_upper:
        case Transform::Kind::root_square_lower: {
            // d = sqrt(1+u^2) - 1 >= 0
            const double d = t.kind == Transform::Kind::root_square_upper ? t.bound - p : p - t.bound;
            if (d < 0.0) throw DomainError("root-square transform: p on the wrong side of the bound");
            return std::sqrt(d * (d + 2.0));
        }
    }
    return p;
}

double transform_derivative(const Transform& t, double u) {
    switch (t.kind) {
        case Transform::Kind::identity: return 1.0;
        case Transform::Kind::exponential: return std::exp(u);
        case Transform::Kind::sinusoidal: return 0.5 * (t.upper - t.lower) * std::cos(u);
        case Transform::Kind::root_square_upper: return -u / std::sqrt(1.0 + u * u);
        case Transform::Kind::root_square_lower: return u / std::sqrt(1.0 + u * u);
    }
    return 1.0;
}

}  // namespace kinfit
