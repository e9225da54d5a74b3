#include "kinfit/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kinfit/error.hpp"

namespace kinfit {

void IntegratorConfig::validate() const {
    if (!(rtol >= 1e-14)) throw DomainError("rtol must be >= 1e-14");
    if (!(atol >= 0.0)) throw DomainError("atol must be >= 0");
    if (!(h0 >= 0.0)) throw DomainError("h0 must be >= 0");
    if (!(hmax > 0.0)) throw DomainError("hmax must be > 0");
    if (max_extrap_order < 2) throw DomainError("max_extrap_order must be >= 2");
    if (max_steps == 0) throw DomainError("max_steps must be > 0");
}

void OdeSystem::second_derivative(double t, const Vector& z, const Vector& dz, double step_hint,
                                  Vector& d2z) const {
    // z'' = F_t + F_z z'; central difference along the trajectory direction.
    const double eps = 1e-3 * std::max(step_hint, 1e-12 * std::max(1.0, std::abs(t)));
    Vector fp(dimension()), fm(dimension());
    rhs(t + eps, z + eps * dz, fp);
    rhs(t - eps, z - eps * dz, fm);
    d2z = (fp - fm) / (2.0 * eps);
}

Vector OdeSystem::absolute_tolerances(double atol) const {
    return Vector::Constant(static_cast<Eigen::Index>(dimension()), atol);
}

StepSchedule StepSchedule::uniform(double t0, double t_end, std::size_t steps, int columns) {
    StepSchedule s;
    s.segments.emplace_back();
    for (std::size_t i = 1; i <= steps; ++i) {
        const double t = i == steps ? t_end : t0 + (t_end - t0) * static_cast<double>(i) / static_cast<double>(steps);
        s.segments.back().push_back({t, columns});
    }
    return s;
}

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

// LU of (I - h J) applied blockwise along the diagonal.
class BlockIterationMatrix {
public:
    void factor(const Matrix& jac, double h) {
        Matrix m = -h * jac;
        m.diagonal().array() += 1.0;
        lu_.compute(m);
        block_ = jac.rows();
    }

    bool solve(const Vector& b, Vector& x) const {
        x.resize(b.size());
        for (Eigen::Index k = 0; k < b.size(); k += block_) x.segment(k, block_) = lu_.solve(b.segment(k, block_));
        return all_finite(x);
    }

private:
    Eigen::PartialPivLU<Matrix> lu_;
    Eigen::Index block_ = 0;
};

struct Attempt {
    bool accepted = false;
    int columns = 0;
    Vector z;
    double h_next = 0.0;
    int k_next = 2;
};

class Extrapolator {
public:
    Extrapolator(const OdeSystem& sys, const IntegratorConfig& cfg)
        : sys_(sys), cfg_(cfg), atol_(sys.absolute_tolerances(cfg.atol)), kmax_(cfg.max_extrap_order) {
        work_units_.assign(static_cast<std::size_t>(kmax_) + 2, 0.0);
        // Jacobian + per column: j right-hand sides and one factorisation.
        double a = 1.0;
        for (int j = 1; j <= kmax_ + 1; ++j) {
            a += j + 1.0;
            work_units_[static_cast<std::size_t>(j)] = a;
        }
    }

    int kmax() const { return kmax_; }

    // Adaptive step of size H from (t, z) with z' = f0, targeting column kc.
    Attempt adaptive(double t, const Vector& z, const Vector& f0, double H, int kc, bool after_reject) {
        Attempt out;
        out.k_next = kc;
        sys_.iteration_jacobian(t, z, jac_);
        const int jmax = std::min(kc + 1, kmax_);
        std::vector<double> hopt(static_cast<std::size_t>(jmax) + 1, 0.0);
        std::vector<double> work(static_cast<std::size_t>(jmax) + 1, 0.0);
        prev_.clear();
        for (int j = 1; j <= jmax; ++j) {
            if (!column(t, z, f0, H, j)) {
                out.h_next = 0.25 * H;
                return out;
            }
            if (j < 2) continue;
            const double err = error_norm(z, row_[static_cast<std::size_t>(j) - 1], row_[static_cast<std::size_t>(j) - 2]);
            double fac = err > 0.0 ? 0.9 * std::pow(1.0 / err, 1.0 / j) : 4.0;
            fac = std::clamp(fac, 0.1, 4.0);
            hopt[static_cast<std::size_t>(j)] = H * fac;
            work[static_cast<std::size_t>(j)] = work_units_[static_cast<std::size_t>(j)] / hopt[static_cast<std::size_t>(j)];
            if (err <= 1.0 && j >= std::max(2, kc - 1)) {
                out.accepted = true;
                out.columns = j;
                out.z = row_[static_cast<std::size_t>(j) - 1];
                choose_next(out, j, hopt, work, after_reject);
                return out;
            }
        }
        out.h_next = jmax >= 2 ? hopt[static_cast<std::size_t>(jmax)] : 0.5 * H;
        out.h_next = std::min(out.h_next, 0.5 * H);
        return out;
    }

    // Step of size H with a prescribed number of columns and no error control.
    bool fixed(double t, const Vector& z, const Vector& f0, double H, int columns, Vector& z_new) {
        sys_.iteration_jacobian(t, z, jac_);
        prev_.clear();
        for (int j = 1; j <= columns; ++j)
            if (!column(t, z, f0, H, j)) return false;
        z_new = row_[static_cast<std::size_t>(columns) - 1];
        return true;
    }

private:
    // Builds extrapolation row j (T_{j,1..j}) from row j-1.
    bool column(double t, const Vector& z, const Vector& f0, double H, int j) {
        const double h = H / j;
        lu_.factor(jac_, h);
        Vector y = z;
        Vector fy = f0;
        Vector delta;
        for (int m = 0; m < j; ++m) {
            if (m > 0) {
                try {
                    sys_.rhs(t + m * h, y, fy);
                } catch (const EvaluationError&) {
                    return false;
                }
                if (!all_finite(fy)) return false;
            }
            if (!lu_.solve(h * fy, delta)) return false;
            y += delta;
        }
        prev_ = std::move(row_);
        row_.assign(static_cast<std::size_t>(j), Vector());
        row_[0] = std::move(y);
        for (int i = 1; i < j; ++i) {
            const double ratio = static_cast<double>(j) / static_cast<double>(j - i) - 1.0;
            const auto ui = static_cast<std::size_t>(i);
            row_[ui] = row_[ui - 1] + (row_[ui - 1] - prev_[ui - 1]) / ratio;
        }
        return all_finite(row_.back());
    }

    double error_norm(const Vector& z0, const Vector& hi, const Vector& lo) const {
        double err = 0.0;
        for (Eigen::Index i = 0; i < z0.size(); ++i) {
            const double sc = atol_[i] + cfg_.rtol * std::max(std::abs(z0[i]), std::abs(hi[i]));
            const double d = std::abs(hi[i] - lo[i]);
            err = std::max(err, sc > 0.0 ? d / sc : (d > 0.0 ? HUGE_VAL : 0.0));
        }
        return err;
    }

    void choose_next(Attempt& out, int j, const std::vector<double>& hopt, const std::vector<double>& work,
                     bool after_reject) const {
        const auto uj = static_cast<std::size_t>(j);
        if (j >= 3 && work[uj - 1] < 0.8 * work[uj]) {
            out.k_next = j - 1;
            out.h_next = hopt[uj - 1];
        } else if (j < kmax_ && !after_reject && (j == 2 || work[uj] < 0.9 * work[uj - 1])) {
            out.k_next = j + 1;
            out.h_next = hopt[uj] * work_units_[uj + 1] / work_units_[uj];
        } else {
            out.k_next = j;
            out.h_next = hopt[uj];
        }
    }

    const OdeSystem& sys_;
    const IntegratorConfig& cfg_;
    Vector atol_;
    int kmax_;
    std::vector<double> work_units_;
    Matrix jac_;
    BlockIterationMatrix lu_;
    std::vector<Vector> row_, prev_;
};

std::string at_time(double t) {
    std::ostringstream os;
    os.precision(10);
    os << "integration failure at t=" << t;
    return os.str();
}

}  // namespace

Trajectory integrate(const OdeSystem& system, double t0, const Vector& z0, double t_end,
                     const std::vector<Breakpoint>& breakpoints, const IntegratorConfig& cfg,
                     const StepSchedule* replay) {
    cfg.validate();
    const std::size_t dim = system.dimension();
    if (static_cast<std::size_t>(z0.size()) != dim) throw DomainError("initial state has wrong dimension");
    if (!all_finite(z0)) throw DomainError("initial state is not finite");
    if (!(t_end >= t0)) throw DomainError("integration span needs t_end >= t0");
    if (system.block_size() == 0 || dim % system.block_size() != 0)
        throw DomainError("block size must divide the system dimension");

    std::vector<const Breakpoint*> events;
    for (const auto& bp : breakpoints)
        if (bp.time > t0 && bp.time <= t_end) events.push_back(&bp);
    std::sort(events.begin(), events.end(), [](const Breakpoint* a, const Breakpoint* b) { return a->time < b->time; });

    if (replay && replay->segments.size() != events.size() + 1)
        throw DomainError("step schedule does not match the breakpoint layout");

    Extrapolator ex(system, cfg);
    std::vector<TrajectorySegment> segments;
    StepSchedule schedule;

    double t = t0;
    Vector z = z0;
    Vector f(dim), d2(dim);
    double H = cfg.h0 > 0.0 ? cfg.h0 : std::max(1e-4 * (t_end - t0), 1e-10);
    int kc = std::min(ex.kmax(), 3);
    std::size_t steps = 0;

    auto push_point = [&](TrajectorySegment& seg, double step_hint) {
        try {
            system.rhs(t, z, f);
        } catch (const EvaluationError& e) {
            throw IntegrationError(at_time(t) + ": " + e.what(), t);
        }
        if (!all_finite(f)) throw IntegrationError(at_time(t) + ": non-finite derivative", t);
        system.second_derivative(t, z, f, step_hint, d2);
        seg.times.push_back(t);
        seg.states.push_back(z);
        seg.derivatives.push_back(f);
        seg.second_derivatives.push_back(d2);
    };

    for (std::size_t s = 0; s <= events.size(); ++s) {
        const double t_stop = s < events.size() ? events[s]->time : t_end;
        segments.emplace_back();
        schedule.segments.emplace_back();
        TrajectorySegment& seg = segments.back();
        auto& sched = schedule.segments.back();
        push_point(seg, std::min(H, cfg.hmax));

        if (replay) {
            for (const auto& step : replay->segments[s]) {
                const double Hs = step.h > 0.0 ? step.h : step.t_end - t;
                if (!(Hs > 0.0)) throw DomainError("step schedule is not increasing");
                Vector zn;
                if (!ex.fixed(t, z, seg.derivatives.back(), Hs, step.columns, zn))
                    throw IntegrationError(at_time(t) + ": replayed step failed", t);
                t = step.t_end;
                z = std::move(zn);
                push_point(seg, Hs);
                sched.push_back(step);
            }
            if (t != t_stop) throw DomainError("step schedule does not end at the segment boundary");
        } else {
            bool after_reject = false;
            while (t < t_stop) {
                if (++steps > cfg.max_steps)
                    throw IntegrationError(at_time(t) + ": maximum number of steps exceeded", t);
                const double remaining = t_stop - t;
                double Hs = std::min(H, cfg.hmax);
                bool last = false;
                if (Hs >= remaining) {
                    Hs = remaining;
                    last = true;
                }
                if (Hs < 1e-14 * std::max(1.0, std::abs(t)))
                    throw IntegrationError(at_time(t) + ": step size underflow", t);

                Attempt a = ex.adaptive(t, z, seg.derivatives.back(), Hs, kc, after_reject);
                kc = std::clamp(a.k_next, 2, ex.kmax());
                if (!a.accepted) {
                    H = a.h_next;
                    after_reject = true;
                    continue;
                }
                t = last ? t_stop : t + Hs;
                z = std::move(a.z);
                push_point(seg, Hs);
                sched.push_back({t, a.columns, Hs});
                double h_next = a.h_next;
                if (after_reject) h_next = std::min(h_next, Hs);
                // a truncated final step says little about the natural step size
                H = last ? std::max(h_next, H) : h_next;
                after_reject = false;
            }
        }

        if (s < events.size()) {
            events[s]->jump(z);
            if (!all_finite(z)) throw IntegrationError(at_time(t) + ": jump map produced non-finite state", t);
        }
    }

    return Trajectory(dim, std::move(segments), std::move(schedule));
}

// ---------------------------------------------------------------------------

void ModelSystem::rhs(double, const Vector& z, Vector& dz) const { model_.evaluate_rhs(z, p_, dz); }

void ModelSystem::iteration_jacobian(double, const Vector& z, Matrix& jac) const {
    Matrix fp;
    model_.evaluate_rhs_jacobians(z, p_, jac, fp);
}

void ModelSystem::second_derivative(double, const Vector& z, const Vector& dz, double, Vector& d2z) const {
    Matrix fy, fp;
    model_.evaluate_rhs_jacobians(z, p_, fy, fp);
    d2z = fy * dz;
}

Vector ModelSystem::absolute_tolerances(double atol) const {
    return Vector::Constant(static_cast<Eigen::Index>(model_.species_count()), atol);
}

std::vector<Breakpoint> model_breakpoints(const KineticModel& model, const Vector& p, double t0, double t_end) {
    std::vector<Breakpoint> out;
    for (std::size_t e = 0; e < model.events().size(); ++e) {
        const double tb = model.events()[e].time;
        if (tb > t0 && tb <= t_end)
            out.push_back({tb, [&model, p, e](Vector& y) { model.apply_event(e, p, y); }});
    }
    return out;
}

Trajectory integrate(const KineticModel& model, const Vector& p, double t0, double t_end,
                     const IntegratorConfig& cfg) {
    return integrate(model, p, t0, t_end, cfg, model.initial_state());
}

Trajectory integrate(const KineticModel& model, const Vector& p, double t0, double t_end,
                     const IntegratorConfig& cfg, const Vector& y0) {
    if (static_cast<std::size_t>(p.size()) != model.parameter_count())
        throw DomainError("parameter vector has wrong length");
    if (!p.allFinite()) throw DomainError("parameter vector is not finite");
    ModelSystem sys(model, p);
    return integrate(sys, t0, y0, t_end, model_breakpoints(model, p, t0, t_end), cfg);
}

std::vector<Trajectory> integrate_experiments(const KineticModel& model, const Vector& p,
                                              const std::vector<ExperimentSetup>& experiments,
                                              const IntegratorConfig& cfg) {
    std::vector<Trajectory> out;
    out.reserve(experiments.size());
    for (std::size_t e = 0; e < experiments.size(); ++e) {
        const auto& ex = experiments[e];
        try {
            out.push_back(integrate(model, p, ex.t0, ex.t_end, cfg, ex.y0 ? *ex.y0 : model.initial_state()));
        } catch (const IntegrationError& err) {
            throw IntegrationError("experiment " + std::to_string(e) + ": " + err.what(), err.time());
        }
        out.back().experiment_id = static_cast<int>(e);
    }
    return out;
}

}  // namespace kinfit
