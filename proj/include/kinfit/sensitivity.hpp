#pragma once

#include <string>
#include <vector>

#include "kinfit/integrator.hpp"
#include "kinfit/model.hpp"

namespace kinfit {

enum class JacobianMethod { variational, finite_difference };

std::string to_string(JacobianMethod m);

/// Raw sensitivities dy_i/dp_j sampled on an output grid.
struct SensitivityResult {
    std::vector<double> times;
    std::vector<Matrix> S;        // n x q per output time
    std::vector<Vector> states;   // y at the output times
    Vector state_abs_max;         // max_t |y_i(t)| over the whole integration interval
    JacobianMethod method = JacobianMethod::variational;
    Vector p_ref;
};

/// |S_ij(t)| * max(|p_j|, thres p_j) / max(max_t |y_i|, thres y_i).
/// Rows whose normaliser is zero are undefined: their entries are NaN and the
/// species index is listed in `undefined_rows`.
struct ScaledSensitivity {
    std::vector<double> times;
    std::vector<Matrix> values;
    Vector normalisers;
    std::vector<std::size_t> undefined_rows;
};

/// State plus q sensitivity columns, z = [y; S e_1; ...; S e_q].
/// The iteration matrix is the block diagonal diag(f_y, ..., f_y).
class VariationalSystem final : public OdeSystem {
public:
    VariationalSystem(const KineticModel& model, Vector p);

    std::size_t dimension() const override { return n_ * (q_ + 1); }
    std::size_t block_size() const override { return n_; }
    void rhs(double t, const Vector& z, Vector& dz) const override;
    void iteration_jacobian(double t, const Vector& z, Matrix& jac) const override;
    Vector absolute_tolerances(double atol) const override;

    Vector initial_state(const Vector& y0) const;
    std::vector<Breakpoint> breakpoints(double t0, double t_end) const;

    Vector state(const Vector& z) const { return z.head(static_cast<Eigen::Index>(n_)); }
    Matrix sensitivities(const Vector& z) const;

private:
    const KineticModel& model_;
    Vector p_;
    std::size_t n_, q_;
    mutable Matrix fy_, fp_;
};

SensitivityResult sensitivities_var_eq(const KineticModel& model, const Vector& p, double t0, double t_end,
                                       const std::vector<double>& output_times, const IntegratorConfig& cfg);

SensitivityResult sensitivities_var_eq(const KineticModel& model, const Vector& p, double t0, double t_end,
                                       const std::vector<double>& output_times, const IntegratorConfig& cfg,
                                       const Vector& y0, Trajectory::Side side = Trajectory::Side::right);

/// Forward differences on a frozen step grid (the nominal run's grid is replayed
/// for every perturbed run). h_i = max(|p_i|, thres p_i) * sqrt(eps); with
/// `feedback`, a column whose differences fall below 10 eps |y| is recomputed
/// once with 100 h_i.
SensitivityResult sensitivities_fd(const KineticModel& model, const Vector& p, double t0, double t_end,
                                   const std::vector<double>& output_times, const IntegratorConfig& cfg,
                                   bool feedback);

SensitivityResult sensitivities_fd(const KineticModel& model, const Vector& p, double t0, double t_end,
                                   const std::vector<double>& output_times, const IntegratorConfig& cfg,
                                   bool feedback, const Vector& y0,
                                   Trajectory::Side side = Trajectory::Side::right);

/// Perturbation used for column i of the finite-difference sensitivities.
double fd_step(double p, double threshold);

ScaledSensitivity scale_sensitivities(const SensitivityResult& raw, const KineticModel& model);

}  // namespace kinfit
