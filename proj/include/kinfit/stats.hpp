#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "kinfit/gauss_newton.hpp"

namespace kinfit {

/// C = s^2 (J^T J)^+ with s^2 = |F|^2 / (L - l), the pseudo-inverse truncated at rank l.
/// Throws DomainError("no degrees of freedom") when L <= l.
Matrix covariance(const Matrix& J, double residual_norm, std::size_t L, std::size_t rank);

/// Parameters with a component in the null space of the rank-l truncation of J;
/// their variance is unbounded.
std::vector<bool> unbounded_parameters(const Matrix& J, std::size_t rank);

/// corr_ij = C_ij / sqrt(C_ii C_jj); unit diagonal, NaN where a variance vanishes.
Matrix correlation(const Matrix& C);

/// Connected components (size >= 2) of the graph with edges |corr_ij| >= threshold.
std::vector<std::vector<std::size_t>> correlated_groups(const Matrix& corr, double threshold = 0.99);

struct StdDev {
    double absolute = 0.0;
    double percent = 0.0;     // NaN when the estimate is zero
    bool unbounded = false;
};

std::vector<StdDev> std_devs(const Matrix& C, const Vector& estimates, const std::vector<bool>& unbounded = {});

/// "± 2.053e-03 ≙ 25.30 %"
std::string format_std_dev(const StdDev& s);

struct FitStatistics {
    std::vector<std::string> names;
    Vector estimates;
    std::vector<StdDev> std_devs;
    Matrix covariance;
    Matrix correlation;
    std::vector<std::vector<std::size_t>> correlated_groups;
    std::size_t dof = 0;
    std::size_t rank = 0;
    double residual_norm = 0.0;
};

/// Statistics in physical parameter units: covariance of the scaled Jacobian,
/// unscaled by W and chain-ruled by the transform derivatives.
FitStatistics fit_statistics(const FitReport& report, const IdentificationProblem& problem,
                             double group_threshold = 0.99);

/// Same, for a generic residual with p = u.
FitStatistics fit_statistics(const FitReport& report, const std::vector<std::string>& names,
                             const Vector& dp_du, double group_threshold = 0.99);

void write_statistics_text(std::ostream& os, const FitStatistics& s);
void write_statistics_csv(std::ostream& os, const FitStatistics& s);

}  // namespace kinfit
