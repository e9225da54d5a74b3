#include "kinfit/gauss_newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kinfit/error.hpp"

namespace kinfit {

Vector ResidualFunction::scaling(const Vector& u) const {
    return u.cwiseAbs().cwiseMax(1e-6);
}

ResidualEvaluation ModelResidual::evaluate(const Vector& u, bool with_jacobian) const {
    return problem_.evaluate(u, with_jacobian, method_);
}

Vector ModelResidual::scaling(const Vector& u) const {
    Vector w(u.size());
    const auto& params = problem_.model().parameters();
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const auto& par = params[static_cast<std::size_t>(i)];
        w[i] = par.transform.is_identity() ? std::max(std::abs(u[i]), par.threshold) : std::max(std::abs(u[i]), 1.0);
    }
    return w;
}

double ModelResidual::max_tolerance() const {
    double m = 0.0;
    for (const auto& row : problem_.data().rows)
        if (!row.constraint) m = std::max(m, 1.0 / row.weight);
    return m;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::converged: return "converged";
        case Verdict::converged_inadequate: return "converged, but the problem is inadequate (incompatibility factor >= 1)";
        case Verdict::max_iterations: return "maximum number of iterations reached";
        case Verdict::rank_exhausted: return "rank exhausted - iteration stopped";
        case Verdict::damping_underflow: return "damping factor below minimum";
        case Verdict::stationary_point: return "stopped at stationary point (no reduction of the residual)";
        case Verdict::integration_failure: return "integration failure";
    }
    return "unknown";
}

bool is_converged(Verdict v) { return v == Verdict::converged; }

void GNConfig::validate(std::size_t q) const {
    if (!(xtol > 0.0)) throw DomainError("xtol must be positive");
    if (!(lambda_min > 0.0 && lambda_min < 1.0)) throw DomainError("lambda_min must lie in (0, 1)");
    if (rank_min < 1 || rank_min > q) throw DomainError("rank_min must lie in [1, q]");
    if (rank_mode == RankMode::fixed && (fixed_rank < 1 || fixed_rank > q))
        throw DomainError("fixed rank must lie in [1, q]");
}

double apriori_damping(double norm_dx_prev, double norm_dxbar, double norm_dx, double rho, double lambda_prev) {
    if (rho == 0.0 || norm_dx == 0.0) return 1.0;
    const double mu = norm_dx_prev * norm_dxbar / (rho * norm_dx) * lambda_prev;
    return std::min(1.0, mu);
}

double aposteriori_damping(double lambda_prev, double norm_dx, double norm_deviation) {
    const double mu = norm_deviation == 0.0 ? std::numeric_limits<double>::infinity()
                                            : norm_dx * lambda_prev * lambda_prev / norm_deviation;
    return std::min({1.0, 0.5 * lambda_prev, 0.5 * mu});
}

double incompatibility_factor(double norm_dxbar, double norm_dx, double lambda) {
    if (lambda != 1.0) throw DomainError("incompatibility factor needs an undamped step");
    return norm_dx == 0.0 ? 0.0 : norm_dxbar / norm_dx;
}

namespace {

struct Previous {
    bool valid = false;
    double norm_dx = 0.0;
    double norm_dxbar = 0.0;
    double lambda = 1.0;
    Matrix J;        // unscaled
    Vector dubar;    // simplified correction in u coordinates
};

}  // namespace

FitReport gauss_newton(const ResidualFunction& f, const Vector& u0, const GNConfig& cfg, const ProtocolSink& sink) {
    const std::size_t q = f.parameter_count();
    cfg.validate(q);
    if (static_cast<std::size_t>(u0.size()) != q) throw DomainError("initial guess has wrong length");
    if (!u0.allFinite()) throw DomainError("initial guess is not finite");
    if (f.residual_count() == 0) throw NoDataError();

    FitReport report;
    report.residual_count = f.residual_count();
    report.constraint_count = f.constraint_count();
    const double delta = cfg.rank_threshold == RankThreshold::xtol ? cfg.xtol : f.max_tolerance();
    report.rank_delta = delta;
    auto emit = [&](const ProtocolRow& row) {
        report.protocol.push_back(row);
        if (sink) sink(row);
    };
    auto finish = [&](Verdict v, const Vector& u, const std::string& detail = {}) {
        report.verdict = v;
        report.u = u;
        report.p = u;
        report.message = detail.empty() ? to_string(v) : to_string(v) + ": " + detail;
        return report;
    };

    Vector u = u0;
    ResidualEvaluation ev;
    try {
        ev = f.evaluate(u, true);
    } catch (const Error& e) {
        report.iterations = 0;
        return finish(Verdict::integration_failure, u, e.what());
    }

    Previous prev;
    std::size_t no_decrease = 0;
    const std::size_t nc = f.constraint_count();

    for (std::size_t k = 0;; ++k) {
        const Vector w = f.scaling(u);
        const Matrix Jhat = ev.J * w.asDiagonal();
        const ConstrainedLeastSquares ls(Jhat, nc, delta);
        std::size_t rank = ls.rank();
        if (cfg.rank_mode == RankMode::fixed) rank = std::min(rank, cfg.fixed_rank);
        rank = std::clamp(rank, ls.min_rank(), ls.max_rank());
        const std::size_t rank_floor = std::max({cfg.rank_min, ls.min_rank(), std::size_t{1}});

        const double normF = ev.F.norm();
        report.iterations = k;
        report.jacobian = ev.J;
        report.jacobian_scaling = w;
        report.residual = ev.F;
        report.normF = normF;

        Vector dx = ls.solve(ev.F, rank);
        double normx = dx.norm();
        emit({k == 0 ? ProtocolRow::Kind::initial : ProtocolRow::Kind::ordinary, k, normF, normx, 0.0, rank, 0.0});

        GNState state;
        state.k = k;
        state.u = u;
        state.p = u;
        state.scaling = w;
        state.normF = normF;
        state.rank = rank;

        auto a_priori = [&]() {
            if (!prev.valid) return cfg.initial_damping();
            const Vector dev = prev.dubar.cwiseQuotient(w) + ls.solve(prev.J * prev.dubar, rank);
            return apriori_damping(prev.norm_dx, prev.norm_dxbar, normx, dev.norm(), prev.lambda);
        };

        double lambda = a_priori();
        bool accepted = false;
        Vector u_trial, dxbar;
        double norm_dxbar = 0.0;
        ResidualEvaluation trial;
        std::string last_failure;

        for (;;) {
            state.dx = dx;
            state.normX = normx;
            report.rank = rank;
            if (normx <= cfg.xtol) break;
            if (k >= cfg.max_iterations) {
                report.history.push_back(state);
                return finish(Verdict::max_iterations, u);
            }

            bool evaluated_any = false;
            while (lambda >= cfg.lambda_min) {
                u_trial = u + lambda * w.cwiseProduct(dx);
                try {
                    trial = f.evaluate(u_trial, false);
                } catch (const Error& e) {
                    last_failure = e.what();
                    lambda *= 0.5;
                    continue;
                }
                evaluated_any = true;
                dxbar = ls.solve(trial.F, rank);
                norm_dxbar = dxbar.norm();
                if (norm_dxbar < normx) {
                    accepted = true;
                    break;
                }
                lambda = aposteriori_damping(lambda, normx, (dxbar - (1.0 - lambda) * dx).norm());
            }
            if (accepted) break;

            if (!evaluated_any && !last_failure.empty()) {
                report.history.push_back(state);
                return finish(Verdict::integration_failure, u, last_failure);
            }
            if (!cfg.rank_reduction) {
                report.history.push_back(state);
                return finish(Verdict::damping_underflow, u);
            }
            if (rank <= rank_floor) {
                report.history.push_back(state);
                return finish(Verdict::rank_exhausted, u);
            }
            --rank;
            dx = ls.solve(ev.F, rank);
            normx = dx.norm();
            state.rank = rank;
            emit({ProtocolRow::Kind::ordinary, k, normF, normx, 0.0, rank, 0.0});
            lambda = a_priori();
        }

        if (!accepted) {
            // Converged: final undamped step with its simplified correction.
            state.lambda = 1.0;
            report.history.push_back(state);
            const Vector u_final = u + w.cwiseProduct(dx);
            ResidualEvaluation fin;
            try {
                fin = f.evaluate(u_final, false);
            } catch (const Error&) {
                report.kappa = -1.0;
                return finish(Verdict::converged, u);
            }
            const Vector dxb = ls.solve(fin.F, rank);
            const double kappa = incompatibility_factor(dxb.norm(), normx, 1.0);
            emit({ProtocolRow::Kind::final, k + 1, fin.F.norm(), dxb.norm(), 1.0, 0, 0.0});
            emit({ProtocolRow::Kind::incompatibility, k + 1, 0.0, 0.0, 0.0, 0, kappa});
            report.kappa = kappa;
            report.iterations = k + 1;
            report.residual = fin.F;
            report.normF = fin.F.norm();
            GNState last;
            last.k = k + 1;
            last.u = u_final;
            last.p = u_final;
            last.scaling = f.scaling(u_final);
            last.normF = report.normF;
            last.rank = rank;
            last.kappa = kappa;
            report.history.push_back(last);
            return finish(kappa < 1.0 ? Verdict::converged : Verdict::converged_inadequate, u_final);
        }

        emit({ProtocolRow::Kind::simplified, k + 1, trial.F.norm(), norm_dxbar, lambda, 0, 0.0});
        if (lambda == 1.0) {
            state.kappa = incompatibility_factor(norm_dxbar, normx, 1.0);
            report.kappa = state.kappa;
            emit({ProtocolRow::Kind::incompatibility, k + 1, 0.0, 0.0, 0.0, 0, state.kappa});
        }
        state.lambda = lambda;
        report.history.push_back(state);

        prev.valid = true;
        prev.norm_dx = normx;
        prev.norm_dxbar = norm_dxbar;
        prev.lambda = lambda;
        prev.J = ev.J;
        prev.dubar = w.cwiseProduct(dxbar);

        const double normF_trial = trial.F.norm();
        try {
            ev = f.evaluate(u_trial, true);
        } catch (const Error& e) {
            report.iterations = k + 1;
            return finish(Verdict::integration_failure, u_trial, e.what());
        }
        u = u_trial;
        no_decrease = normF_trial >= normF ? no_decrease + 1 : 0;
        if (cfg.stationary_steps > 0 && no_decrease >= cfg.stationary_steps) {
            report.iterations = k + 1;
            report.normF = normF_trial;
            report.residual = ev.F;
            return finish(Verdict::stationary_point, u);
        }
    }
}

FitReport fit(const IdentificationProblem& problem, const GNConfig& cfg, const ProtocolSink& sink) {
    return fit(problem, problem.to_internal(problem.model().nominal_parameters()), cfg, sink);
}

FitReport fit(const IdentificationProblem& problem, const Vector& u0, const GNConfig& cfg,
              const ProtocolSink& sink) {
    ModelResidual f(problem, cfg.jacobian_method);
    FitReport report = gauss_newton(f, u0, cfg, sink);
    report.p = problem.to_parameters(report.u);
    for (auto& s : report.history) s.p = problem.to_parameters(s.u);
    return report;
}

}  // namespace kinfit
