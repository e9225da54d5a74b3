#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kinfit/data.hpp"
#include "kinfit/linalg.hpp"
#include "kinfit/sensitivity.hpp"

namespace kinfit {

/// Nonlinear least-squares residual F(u) with Jacobian in the internal coordinates u.
/// The first `constraint_count()` entries are equality constraints.
class ResidualFunction {
public:
    virtual ~ResidualFunction() = default;

    virtual std::size_t parameter_count() const = 0;
    virtual std::size_t residual_count() const = 0;
    virtual std::size_t constraint_count() const { return 0; }

    /// May throw IntegrationError / EvaluationError at infeasible points.
    virtual ResidualEvaluation evaluate(const Vector& u, bool with_jacobian) const = 0;

    /// Diagonal of the local scaling matrix W at u. Default max(|u_i|, 1e-6).
    virtual Vector scaling(const Vector& u) const;

    /// Largest prescribed measurement tolerance (for the alternative rank threshold).
    virtual double max_tolerance() const { return 0.0; }
};

/// Adapter from an identification problem. Scaling is max(|p_i|, thres(p_i)) for
/// untransformed parameters and max(|u_i|, 1) in the internal coordinate otherwise.
class ModelResidual final : public ResidualFunction {
public:
    ModelResidual(const IdentificationProblem& problem, JacobianMethod method)
        : problem_(problem), method_(method) {}

    std::size_t parameter_count() const override { return problem_.parameter_count(); }
    std::size_t residual_count() const override { return problem_.residual_count(); }
    std::size_t constraint_count() const override { return problem_.data().constraint_count; }
    ResidualEvaluation evaluate(const Vector& u, bool with_jacobian) const override;
    Vector scaling(const Vector& u) const override;
    double max_tolerance() const override;

private:
    const IdentificationProblem& problem_;
    JacobianMethod method_;
};

enum class Verdict {
    converged,
    converged_inadequate,  // converged with incompatibility factor >= 1
    max_iterations,
    rank_exhausted,
    damping_underflow,
    stationary_point,
    integration_failure,
};

std::string to_string(Verdict v);
bool is_converged(Verdict v);

enum class RankMode { automatic, fixed };
enum class RankThreshold { xtol, max_tolerance };

struct GNConfig {
    double xtol = 1e-4;
    double lambda_min = 1e-4;
    std::size_t rank_min = 1;
    std::size_t max_iterations = 50;
    JacobianMethod jacobian_method = JacobianMethod::variational;
    RankMode rank_mode = RankMode::automatic;
    std::size_t fixed_rank = 0;
    RankThreshold rank_threshold = RankThreshold::xtol;
    bool hard_problem = false;      // initial damping 1e-2 instead of 1
    bool rank_reduction = true;     // deliberate rank reduction on damping failure
    std::size_t stationary_steps = 3;

    double initial_damping() const { return hard_problem ? 1e-2 : 1.0; }
    void validate(std::size_t q) const;
};

/// One line of the iteration protocol.
struct ProtocolRow {
    enum class Kind { initial, ordinary, simplified, final, incompatibility };
    Kind kind = Kind::initial;
    std::size_t iteration = 0;
    double normf = 0.0;
    double normx = 0.0;
    double damping = 0.0;   // simplified / final rows
    std::size_t rank = 0;   // initial / ordinary rows
    double kappa = 0.0;     // incompatibility rows
};

/// Solver state at an accepted iterate.
struct GNState {
    std::size_t k = 0;
    Vector u, p;
    Vector scaling;          // diagonal of W_k
    Vector dx;               // scaled ordinary correction
    double normF = 0.0;
    double normX = 0.0;
    double lambda = 0.0;     // damping used to leave this iterate (0 if none)
    std::size_t rank = 0;
    double kappa = -1.0;     // negative when not available
};

struct FitReport {
    Verdict verdict = Verdict::max_iterations;
    std::string message;
    Vector u, p;
    std::size_t iterations = 0;
    std::size_t rank = 0;
    double normF = 0.0;
    double kappa = -1.0;     // last incompatibility factor, negative when none was computed
    std::vector<ProtocolRow> protocol;
    std::vector<GNState> history;

    // Last unscaled Jacobian in internal coordinates, with its scaling.
    Matrix jacobian;
    Vector jacobian_scaling;
    Vector residual;
    std::size_t residual_count = 0;
    std::size_t constraint_count = 0;
    double rank_delta = 0.0;
};

/// min{1, mu} with mu = |dx_{k-1}| |dxbar_k| / (rho |dx_k|) * lambda_{k-1}; rho = 0 gives 1.
double apriori_damping(double norm_dx_prev, double norm_dxbar, double norm_dx, double rho, double lambda_prev);

/// min{1, lambda/2, mu/2} with mu = |dx| lambda^2 / |dxbar - (1 - lambda) dx|.
double aposteriori_damping(double lambda_prev, double norm_dx, double norm_deviation);

/// |dxbar_{k+1}| / |dx_k| for an undamped step; 0 when dx vanishes.
double incompatibility_factor(double norm_dxbar, double norm_dx, double lambda);

using ProtocolSink = std::function<void(const ProtocolRow&)>;

/// Damped Gauss-Newton iteration from u0. Rows are passed to `sink` as they are produced.
/// Throws NoDataError when there are no residuals.
FitReport gauss_newton(const ResidualFunction& f, const Vector& u0, const GNConfig& cfg,
                       const ProtocolSink& sink = {});

/// Fits the parameters of `problem` from the model's nominal values.
FitReport fit(const IdentificationProblem& problem, const GNConfig& cfg, const ProtocolSink& sink = {});
FitReport fit(const IdentificationProblem& problem, const Vector& u0, const GNConfig& cfg,
              const ProtocolSink& sink = {});

/// Fixed-width protocol text (one header line, then rows).
std::string format_protocol_header();
std::string format_protocol_row(const ProtocolRow& row);
std::string format_protocol(const std::vector<ProtocolRow>& rows);

}  // namespace kinfit
