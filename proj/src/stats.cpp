#include "kinfit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "kinfit/error.hpp"
#include "kinfit/linalg.hpp"

namespace kinfit {

Matrix covariance(const Matrix& J, double residual_norm, std::size_t L, std::size_t rank) {
    if (L <= rank) throw DomainError("no degrees of freedom");
    const double s2 = residual_norm * residual_norm / static_cast<double>(L - rank);
    const PivotedQR qr = qr_decompose(J);
    Matrix C = s2 * truncated_gram_pinv(qr, rank);
    return 0.5 * (C + C.transpose());
}

std::vector<bool> unbounded_parameters(const Matrix& J, std::size_t rank) {
    const Matrix Z = truncated_row_space(qr_decompose(J), rank);
    std::vector<bool> out(static_cast<std::size_t>(J.cols()));
    for (Eigen::Index i = 0; i < J.cols(); ++i)
        out[static_cast<std::size_t>(i)] = 1.0 - Z.row(i).squaredNorm() > 1e-8;
    return out;
}

Matrix correlation(const Matrix& C) {
    const Eigen::Index q = C.rows();
    Matrix r(q, q);
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j < q; ++j) {
            if (i == j) {
                r(i, j) = 1.0;
                continue;
            }
            const double d = C(i, i) * C(j, j);
            r(i, j) = d > 0.0 ? std::clamp(C(i, j) / std::sqrt(d), -1.0, 1.0)
                              : std::numeric_limits<double>::quiet_NaN();
        }
    return r;
}

std::vector<std::vector<std::size_t>> correlated_groups(const Matrix& corr, double threshold) {
    const auto q = static_cast<std::size_t>(corr.rows());
    std::vector<std::size_t> parent(q);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = i + 1; j < q; ++j)
            if (std::abs(corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) >= threshold) {
                const std::size_t a = find(i), b = find(j);
                parent[std::max(a, b)] = std::min(a, b);
            }
    std::vector<std::vector<std::size_t>> groups;
    std::vector<long> slot(q, -1);
    for (std::size_t i = 0; i < q; ++i) {
        const std::size_t root = find(i);
        if (slot[root] < 0) {
            slot[root] = static_cast<long>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(slot[root])].push_back(i);
    }
    std::erase_if(groups, [](const auto& g) { return g.size() < 2; });
    return groups;
}

std::vector<StdDev> std_devs(const Matrix& C, const Vector& estimates, const std::vector<bool>& unbounded) {
    std::vector<StdDev> out(static_cast<std::size_t>(C.rows()));
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
        auto& s = out[static_cast<std::size_t>(i)];
        s.absolute = std::sqrt(std::max(C(i, i), 0.0));
        s.percent = estimates[i] != 0.0 ? 100.0 * s.absolute / std::abs(estimates[i])
                                        : std::numeric_limits<double>::quiet_NaN();
        s.unbounded = !unbounded.empty() && unbounded[static_cast<std::size_t>(i)];
    }
    return out;
}

std::string format_std_dev(const StdDev& s) {
    char buf[96];
    if (std::isnan(s.percent))
        std::snprintf(buf, sizeof buf, "± %.3e ≙   n/a", s.absolute);
    else
        std::snprintf(buf, sizeof buf, "± %.3e ≙ %5.2f %%", s.absolute, s.percent);
    std::string out = buf;
    if (s.unbounded) out += "  (unbounded)";
    return out;
}

FitStatistics fit_statistics(const FitReport& report, const std::vector<std::string>& names, const Vector& dp_du,
                             double group_threshold) {
    FitStatistics s;
    s.names = names;
    s.estimates = report.p;
    s.rank = report.rank;
    s.residual_norm = report.normF;
    const std::size_t L = report.residual_count;
    s.dof = L > s.rank ? L - s.rank : 0;

    const Matrix Jhat = report.jacobian * report.jacobian_scaling.asDiagonal();
    const Matrix Cx = covariance(Jhat, report.normF, L, s.rank);
    const Vector d = report.jacobian_scaling.cwiseProduct(dp_du);
    s.covariance = d.asDiagonal() * Cx * d.asDiagonal();
    s.correlation = correlation(s.covariance);
    s.correlated_groups = correlated_groups(s.correlation, group_threshold);
    s.std_devs = std_devs(s.covariance, s.estimates, unbounded_parameters(Jhat, s.rank));
    return s;
}

FitStatistics fit_statistics(const FitReport& report, const IdentificationProblem& problem, double group_threshold) {
    std::vector<std::string> names;
    for (const auto& p : problem.model().parameters()) names.push_back(p.name);
    return fit_statistics(report, names, problem.transform_derivatives(report.u), group_threshold);
}

void write_statistics_text(std::ostream& os, const FitStatistics& s) {
    std::size_t width = 9;
    for (const auto& n : s.names) width = std::max(width, n.size());
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s  %14s   %s\n", static_cast<int>(width), "Parameter", "Reconstruction",
                  "Std. Dev.");
    os << buf;
    for (std::size_t i = 0; i < s.names.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%-*s  %14.3e   ", static_cast<int>(width), s.names[i].c_str(),
                      s.estimates[static_cast<Eigen::Index>(i)]);
        os << buf << format_std_dev(s.std_devs[i]) << '\n';
    }
    os << "\nresidual norm: " << std::setprecision(7) << std::scientific << s.residual_norm << std::defaultfloat
       << "\nrank: " << s.rank << "\ndegrees of freedom: " << s.dof << "\n\ncorrelation matrix:\n";
    for (Eigen::Index i = 0; i < s.correlation.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), s.names[static_cast<std::size_t>(i)].c_str());
        os << buf;
        for (Eigen::Index j = 0; j < s.correlation.cols(); ++j) {
            std::snprintf(buf, sizeof buf, " %8.4f", s.correlation(i, j));
            os << buf;
        }
        os << '\n';
    }
    os << "\ncorrelated groups (|corr| >= 0.99):";
    if (s.correlated_groups.empty()) os << " none";
    os << '\n';
    for (const auto& g : s.correlated_groups) {
        os << " ";
        for (std::size_t i : g) os << ' ' << s.names[i];
        os << '\n';
    }
}

void write_statistics_csv(std::ostream& os, const FitStatistics& s) {
    os << "parameter,estimate,std_abs,std_pct\n";
    char buf[128];
    for (std::size_t i = 0; i < s.names.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g\n", s.estimates[static_cast<Eigen::Index>(i)],
                      s.std_devs[i].absolute, s.std_devs[i].percent);
        os << s.names[i] << buf;
    }
}

}  // namespace kinfit
