#include "kinfit/sensitivity.hpp"

#include <cmath>
#include <limits>

#include "kinfit/error.hpp"

namespace kinfit {

std::string to_string(JacobianMethod m) {
    return m == JacobianMethod::variational ? "vareq" : "fd";
}

VariationalSystem::VariationalSystem(const KineticModel& model, Vector p)
    : model_(model), p_(std::move(p)), n_(model.species_count()), q_(model.parameter_count()) {
    if (static_cast<std::size_t>(p_.size()) != q_) throw DomainError("parameter vector has wrong length");
}

void VariationalSystem::rhs(double, const Vector& z, Vector& dz) const {
    const auto n = static_cast<Eigen::Index>(n_);
    const Vector y = z.head(n);
    model_.evaluate_rhs_jacobians(y, p_, fy_, fp_);
    dz.resize(z.size());
    Vector f;
    model_.evaluate_rhs(y, p_, f);
    dz.head(n) = f;
    const auto S = Eigen::Map<const Matrix>(z.data() + n, n, static_cast<Eigen::Index>(q_));
    Eigen::Map<Matrix> dS(dz.data() + n, n, static_cast<Eigen::Index>(q_));
    dS.noalias() = fy_ * S;
    dS += fp_;
}

void VariationalSystem::iteration_jacobian(double, const Vector& z, Matrix& jac) const {
    model_.evaluate_rhs_jacobians(z.head(static_cast<Eigen::Index>(n_)), p_, jac, fp_);
}

Vector VariationalSystem::absolute_tolerances(double atol) const {
    Vector a(static_cast<Eigen::Index>(dimension()));
    const auto n = static_cast<Eigen::Index>(n_);
    a.head(n).setConstant(atol);
    for (std::size_t j = 0; j < q_; ++j) {
        const double pw = std::max(std::abs(p_[static_cast<Eigen::Index>(j)]), model_.parameters()[j].threshold);
        a.segment(n * static_cast<Eigen::Index>(j + 1), n).setConstant(atol / pw);
    }
    return a;
}

Vector VariationalSystem::initial_state(const Vector& y0) const {
    Vector z = Vector::Zero(static_cast<Eigen::Index>(dimension()));
    z.head(static_cast<Eigen::Index>(n_)) = y0;
    return z;
}

std::vector<Breakpoint> VariationalSystem::breakpoints(double t0, double t_end) const {
    std::vector<Breakpoint> out;
    const auto n = static_cast<Eigen::Index>(n_);
    const auto q = static_cast<Eigen::Index>(q_);
    for (std::size_t e = 0; e < model_.events().size(); ++e) {
        const double tb = model_.events()[e].time;
        if (!(tb > t0 && tb <= t_end)) continue;
        auto [gy, gp] = model_.event_jacobians(e);
        out.push_back({tb, [this, e, n, q, gy = std::move(gy), gp = std::move(gp)](Vector& z) {
                           Vector y = z.head(n);
                           model_.apply_event(e, p_, y);
                           z.head(n) = y;
                           Eigen::Map<Matrix> S(z.data() + n, n, q);
                           const Matrix left = S;
                           S = gy * left + gp;
                       }});
    }
    return out;
}

Matrix VariationalSystem::sensitivities(const Vector& z) const {
    const auto n = static_cast<Eigen::Index>(n_);
    return Eigen::Map<const Matrix>(z.data() + n, n, static_cast<Eigen::Index>(q_));
}

namespace {

void check_output_times(const std::vector<double>& times, double t0, double t_end) {
    for (double t : times)
        if (!(t >= t0 && t <= t_end)) throw DomainError("output time outside the integration span");
}

}  // namespace

SensitivityResult sensitivities_var_eq(const KineticModel& model, const Vector& p, double t0, double t_end,
                                       const std::vector<double>& output_times, const IntegratorConfig& cfg) {
    return sensitivities_var_eq(model, p, t0, t_end, output_times, cfg, model.initial_state());
}

SensitivityResult sensitivities_var_eq(const KineticModel& model, const Vector& p, double t0, double t_end,
                                       const std::vector<double>& output_times, const IntegratorConfig& cfg,
                                       const Vector& y0, Trajectory::Side side) {
    check_output_times(output_times, t0, t_end);
    VariationalSystem sys(model, p);
    const Trajectory traj = integrate(sys, t0, sys.initial_state(y0), t_end, sys.breakpoints(t0, t_end), cfg);

    SensitivityResult out;
    out.method = JacobianMethod::variational;
    out.p_ref = p;
    out.times = output_times;
    out.state_abs_max = traj.abs_max(model.species_count());
    for (double t : output_times) {
        const Vector z = traj.interpolate(t, side);
        out.states.push_back(sys.state(z));
        out.S.push_back(sys.sensitivities(z));
    }
    return out;
}

double fd_step(double p, double threshold) {
    return std::max(std::abs(p), threshold) * std::sqrt(std::numeric_limits<double>::epsilon());
}

SensitivityResult sensitivities_fd(const KineticModel& model, const Vector& p, double t0, double t_end,
                                   const std::vector<double>& output_times, const IntegratorConfig& cfg,
                                   bool feedback) {
    return sensitivities_fd(model, p, t0, t_end, output_times, cfg, feedback, model.initial_state());
}

SensitivityResult sensitivities_fd(const KineticModel& model, const Vector& p, double t0, double t_end,
                                   const std::vector<double>& output_times, const IntegratorConfig& cfg,
                                   bool feedback, const Vector& y0, Trajectory::Side side) {
    check_output_times(output_times, t0, t_end);
    const std::size_t n = model.species_count();
    const std::size_t q = model.parameter_count();
    const auto nominal = integrate(model, p, t0, t_end, cfg, y0);

    SensitivityResult out;
    out.method = JacobianMethod::finite_difference;
    out.p_ref = p;
    out.times = output_times;
    out.state_abs_max = nominal.abs_max();
    for (double t : output_times) {
        out.states.push_back(nominal.interpolate(t, side));
        out.S.push_back(Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q)));
    }
    const double eps = std::numeric_limits<double>::epsilon();
    const double ymax = out.state_abs_max.size() ? out.state_abs_max.maxCoeff() : 0.0;

    for (std::size_t i = 0; i < q; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        double h = fd_step(p[ii], model.parameters()[i].threshold);
        for (int attempt = 0; attempt < 2; ++attempt) {
            Vector pp = p;
            pp[ii] += h;
            const double hh = pp[ii] - p[ii];  // representable step
            ModelSystem sys(model, pp);
            const Trajectory pert =
                integrate(sys, t0, y0, t_end, model_breakpoints(model, pp, t0, t_end), cfg, &nominal.schedule());
            double dmax = 0.0;
            for (std::size_t k = 0; k < output_times.size(); ++k) {
                const Vector diff = pert.interpolate(output_times[k], side) - out.states[k];
                dmax = std::max(dmax, diff.cwiseAbs().maxCoeff());
                out.S[k].col(ii) = diff / hh;
            }
            if (!feedback || attempt == 1 || dmax == 0.0 || dmax >= 10.0 * eps * ymax) break;
            h *= 100.0;
        }
    }
    return out;
}

ScaledSensitivity scale_sensitivities(const SensitivityResult& raw, const KineticModel& model) {
    const std::size_t n = model.species_count();
    const std::size_t q = model.parameter_count();
    ScaledSensitivity out;
    out.times = raw.times;
    out.normalisers.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        out.normalisers[ii] = std::max(raw.state_abs_max[ii], model.species()[i].threshold);
        if (!(out.normalisers[ii] > 0.0)) out.undefined_rows.push_back(i);
    }
    Vector pw(static_cast<Eigen::Index>(q));
    for (std::size_t j = 0; j < q; ++j)
        pw[static_cast<Eigen::Index>(j)] =
            std::max(std::abs(raw.p_ref[static_cast<Eigen::Index>(j)]), model.parameters()[j].threshold);

    for (const Matrix& S : raw.S) {
        Matrix v = S.cwiseAbs();
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (out.normalisers[ii] > 0.0) v.row(ii) = v.row(ii).cwiseProduct(pw.transpose()) / out.normalisers[ii];
            else v.row(ii).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
        out.values.push_back(std::move(v));
    }
    return out;
}

}  // namespace kinfit
