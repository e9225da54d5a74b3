#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "kinfit/integrator.hpp"
#include "kinfit/model.hpp"
#include "kinfit/sensitivity.hpp"

namespace kinfit {

/// One measured component. A missing tolerance selects max(|z|, thres);
/// a zero tolerance makes the record an equality constraint.
struct Measurement {
    std::string experiment;
    double time = 0.0;
    std::string observable;
    double value = 0.0;
    std::optional<double> tolerance;
};

struct ExperimentData {
    std::vector<Measurement> records;

    /// Experiment ids in order of first appearance.
    std::vector<std::string> experiments() const;
};

/// CSV with header `experiment,time,observable,value,tolerance`. Rows whose
/// value is empty, `nan` or `NA` are missing and produce no record.
ExperimentData parse_data_csv(std::string_view text);
ExperimentData load_data(const std::string& path);
void write_data_csv(std::ostream& os, const ExperimentData& data);

/// Multiplies every value by (1 + sigma * N(0,1)) using a seeded generator.
ExperimentData add_multiplicative_noise(const ExperimentData& data, double sigma, std::uint64_t seed);

/// Samples `observables` of a trajectory at `times` (exact model data).
ExperimentData sample_observables(const KineticModel& model, const Trajectory& traj,
                                  const std::vector<std::string>& observables, const std::vector<double>& times,
                                  const std::string& experiment = "1");

/// Measurement records resolved against a model, ordered constraint rows first.
struct ResidualRow {
    std::size_t experiment;       // index into ResolvedData::experiments
    double time;
    Eigen::RowVectorXd output;    // linear output map
    double value;
    double weight;                // 1/delta, or 1 for constraint rows
    bool constraint;
    std::size_t record;           // index in the source ExperimentData
};

struct ResolvedData {
    std::vector<std::string> experiment_ids;
    std::vector<ExperimentSetup> experiments;
    std::vector<ResidualRow> rows;
    std::size_t constraint_count = 0;

    std::size_t size() const noexcept { return rows.size(); }
};

/// Resolves observables (ParseError naming an unknown observable), computes
/// effective tolerances and experiment spans. Experiments start at `t0` from the
/// model initial state unless `setups` (keyed by experiment order) override it.
ResolvedData resolve_data(const KineticModel& model, const ExperimentData& data, double t0 = 0.0,
                          const std::vector<ExperimentSetup>& setups = {});

/// Weighted residual F and its Jacobian with respect to the internal coordinates u.
struct ResidualEvaluation {
    Vector F;
    Matrix J;  // L x q, empty when not requested
};

/// Parameter-identification problem: model, resolved data and integrator settings.
class IdentificationProblem {
public:
    IdentificationProblem(KineticModel model, ResolvedData data, IntegratorConfig cfg);

    const KineticModel& model() const noexcept { return model_; }
    const ResolvedData& data() const noexcept { return data_; }
    const IntegratorConfig& integrator_config() const noexcept { return cfg_; }
    std::size_t parameter_count() const noexcept { return model_.parameter_count(); }
    std::size_t residual_count() const noexcept { return data_.size(); }

    /// p = phi(u) componentwise.
    Vector to_parameters(const Vector& u) const;
    Vector to_internal(const Vector& p) const;
    Vector transform_derivatives(const Vector& u) const;

    /// Model predictions (output map applied) for every row, at parameters p.
    Vector predictions(const Vector& p) const;

    Vector residual(const Vector& u) const;
    ResidualEvaluation evaluate(const Vector& u, bool with_jacobian, JacobianMethod method) const;

    /// Retry tiny finite-difference columns with a larger step.
    bool fd_feedback = false;

private:
    KineticModel model_;
    ResolvedData data_;
    IntegratorConfig cfg_;
    std::vector<std::vector<std::size_t>> rows_by_experiment_;
    std::vector<std::vector<double>> times_by_experiment_;
    std::vector<std::size_t> time_index_;  // per row: index into its experiment's times
};

/// F(p) with constraint flags: entries (y_obs - z)/delta, constraint rows unweighted.
struct AssembledResidual {
    Vector F;
    std::vector<bool> constraint;
};

AssembledResidual assemble_residual(const KineticModel& model, const Vector& p, const ExperimentData& data,
                                    const IntegratorConfig& cfg, double t0 = 0.0);

/// Weighted Jacobian of F with respect to the internal coordinates u = phi^{-1}(p).
Matrix jacobian_at(const KineticModel& model, const Vector& p, const ExperimentData& data,
                   const IntegratorConfig& cfg, JacobianMethod method, double t0 = 0.0);

}  // namespace kinfit
