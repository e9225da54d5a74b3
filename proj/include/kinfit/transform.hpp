#pragma once

#include <string>

namespace kinfit {

/// Reparametrisation p = phi(u) used to keep a parameter inside a range while
/// the solver iterates freely on u.
struct Transform {
    enum class Kind { identity, exponential, sinusoidal, root_square_upper, root_square_lower };

    Kind kind = Kind::identity;
    double lower = 0.0;  // A for sinusoidal
    double upper = 0.0;  // B for sinusoidal
    double bound = 0.0;  // C for the root-square pair

    static Transform identity() { return {}; }
    static Transform exponential() { return {Kind::exponential}; }
    static Transform sinusoidal(double a, double b);
    static Transform root_square_upper(double c) { return {Kind::root_square_upper, 0.0, 0.0, c}; }
    static Transform root_square_lower(double c) { return {Kind::root_square_lower, 0.0, 0.0, c}; }

    bool is_identity() const noexcept { return kind == Kind::identity; }

    /// Model-file spelling, e.g. "sin(0,2)"; empty for identity.
    std::string to_string() const;
};

double transform_forward(const Transform& t, double u);

/// Inverse on the principal branch; throws DomainError outside the range.
double transform_backward(const Transform& t, double p);

double transform_derivative(const Transform& t, double u);

}  // namespace kinfit
