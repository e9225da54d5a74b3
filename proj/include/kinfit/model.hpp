#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kinfit/transform.hpp"

namespace kinfit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Species {
    std::string name;
    double initial_value = 0.0;
    double threshold = 0.0;
};

struct Parameter {
    std::string name;
    double value = 0.0;
    double threshold = 1e-6;
    Transform transform;
};

struct StoichTerm {
    std::size_t species;
    int coefficient;
};

/// Mass-action reaction. rate = factor * k * prod_c p_c * prod_i y_i^{e_i}, where
/// e_i is the reactant stoichiometry unless overridden by an explicit exponent and
/// the optional co-factors p_c are further parameters multiplying the rate constant.
struct Reaction {
    std::string name;
    std::size_t rate_parameter = 0;
    double rate_factor = 1.0;
    std::vector<std::size_t> rate_cofactors;
    std::vector<StoichTerm> reactants;
    std::vector<StoichTerm> products;
    std::vector<std::pair<std::size_t, double>> exponent_overrides;
};

struct Observable {
    std::string name;
    std::vector<std::pair<std::size_t, double>> coefficients;
};

/// Affine expression c0 + sum a_i y_i + sum b_k p_k.
struct AffineExpr {
    double constant = 0.0;
    std::vector<std::pair<std::size_t, double>> species_terms;
    std::vector<std::pair<std::size_t, double>> parameter_terms;
};

/// Jump map applied exactly at `time`; species without an assignment keep their value.
struct BreakpointEvent {
    double time = 0.0;
    std::vector<std::pair<std::size_t, AffineExpr>> assignments;
};

/// One power-law factor of a rate expression.
struct RateFactor {
    std::size_t species;
    double exponent;
    int integer_exponent;  // valid when is_integer
    bool is_integer;
};

class KineticModel {
public:
    KineticModel() = default;

    /// Validates every invariant; throws ModelError on violation.
    KineticModel(std::vector<Species> species, std::vector<Parameter> parameters,
                 std::vector<Reaction> reactions, std::vector<Observable> observables,
                 std::vector<BreakpointEvent> events);

    std::size_t species_count() const noexcept { return species_.size(); }
    std::size_t parameter_count() const noexcept { return parameters_.size(); }

    const std::vector<Species>& species() const noexcept { return species_; }
    const std::vector<Parameter>& parameters() const noexcept { return parameters_; }
    const std::vector<Reaction>& reactions() const noexcept { return reactions_; }
    const std::vector<Observable>& observables() const noexcept { return observables_; }
    const std::vector<BreakpointEvent>& events() const noexcept { return events_; }

    std::optional<std::size_t> find_species(std::string_view name) const;
    std::optional<std::size_t> find_parameter(std::string_view name) const;
    std::optional<std::size_t> find_observable(std::string_view name) const;

    Vector initial_state() const;
    Vector nominal_parameters() const;
    Vector parameter_thresholds() const;

    /// Linear output map for a named observable, falling back to a species of
    /// that name. Returns a row vector of length n, or nullopt if unknown.
    std::optional<Eigen::RowVectorXd> output_map(std::string_view name) const;

    /// Threshold of an output: sum_i |c_i| thres(y_i).
    double output_threshold(const Eigen::RowVectorXd& map) const;

    void evaluate_rhs(const Vector& y, const Vector& p, Vector& dy) const;
    Vector evaluate_rhs(const Vector& y, const Vector& p) const;

    /// Analytic f_y (n x n) and f_p (n x q).
    void evaluate_rhs_jacobians(const Vector& y, const Vector& p, Matrix& fy, Matrix& fp) const;
    std::pair<Matrix, Matrix> evaluate_rhs_jacobians(const Vector& y, const Vector& p) const;

    /// Applies event `index` to `y` in place (right-hand limit from left state).
    void apply_event(std::size_t index, const Vector& p, Vector& y) const;

    /// Partial derivatives of the jump map of event `index`: (dg/dy, dg/dp).
    std::pair<Matrix, Matrix> event_jacobians(std::size_t index) const;

    /// Returns a copy with parameter values replaced (same order).
    KineticModel with_parameters(const Vector& values) const;

private:
    double rate(std::size_t r, const Vector& y, const Vector& p) const;

    std::vector<Species> species_;
    std::vector<Parameter> parameters_;
    std::vector<Reaction> reactions_;
    std::vector<Observable> observables_;
    std::vector<BreakpointEvent> events_;

    // Precomputed per reaction: rate factors and net stoichiometry (sparse).
    std::vector<std::vector<RateFactor>> rate_factors_;
    std::vector<std::vector<std::pair<std::size_t, double>>> net_stoich_;
};

/// Parses the line-oriented model format; throws ParseError / ModelError.
KineticModel parse_model(std::string_view text);
KineticModel load_model(const std::string& path);

/// Writes `@parameters` lines for the given values (reusable as a model fragment).
std::string format_parameters(const KineticModel& model, const Vector& values);

}  // namespace kinfit
