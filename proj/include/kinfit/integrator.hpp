#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kinfit/model.hpp"

namespace kinfit {

struct IntegratorConfig {
    double rtol = 1e-6;
    double atol = 1e-12;
    double h0 = 0.0;  // 0 selects 1e-4 of the integration span
    double hmax = std::numeric_limits<double>::infinity();
    int max_extrap_order = 6;
    std::size_t max_steps = 200000;

    void validate() const;
};

/// Right-hand side z' = F(t, z) seen by the integrator.
///
/// The iteration matrix is built from `iteration_jacobian`, which returns a
/// `block_size() x block_size()` matrix. When `block_size() < dimension()` the
/// same block is repeated along the diagonal, so one factorisation serves all
/// blocks.
class OdeSystem {
public:
    virtual ~OdeSystem() = default;

    virtual std::size_t dimension() const = 0;
    virtual std::size_t block_size() const { return dimension(); }

    virtual void rhs(double t, const Vector& z, Vector& dz) const = 0;
    virtual void iteration_jacobian(double t, const Vector& z, Matrix& jac) const = 0;

    /// z'' at (t, z) given dz = F(t, z). Default: central difference along (1, dz).
    virtual void second_derivative(double t, const Vector& z, const Vector& dz, double step_hint,
                                   Vector& d2z) const;

    /// Per-component absolute tolerances derived from the scalar `atol`.
    virtual Vector absolute_tolerances(double atol) const;
};

/// Adapter for ad-hoc systems given as callables.
class FunctionSystem final : public OdeSystem {
public:
    using Rhs = std::function<void(double, const Vector&, Vector&)>;
    using Jac = std::function<void(double, const Vector&, Matrix&)>;

    FunctionSystem(std::size_t dim, Rhs rhs, Jac jac) : dim_(dim), rhs_(std::move(rhs)), jac_(std::move(jac)) {}

    std::size_t dimension() const override { return dim_; }
    void rhs(double t, const Vector& z, Vector& dz) const override { rhs_(t, z, dz); }
    void iteration_jacobian(double t, const Vector& z, Matrix& jac) const override { jac_(t, z, jac); }

private:
    std::size_t dim_;
    Rhs rhs_;
    Jac jac_;
};

/// Fixed time at which integration stops and `jump` maps the left state to the right state.
struct Breakpoint {
    double time;
    std::function<void(Vector&)> jump;
};

/// Accepted step grid (end times and extrapolation columns) of a run, replayable
/// without error control. Replaying keeps the discretisation fixed, which makes
/// the numerical solution a smooth function of the parameters.
struct StepSchedule {
    struct Step {
        double t_end;
        int columns;
        double h = 0.0;  // exact step size taken; 0 means t_end minus the previous end
    };
    std::vector<std::vector<Step>> segments;

    /// Equidistant steps on a single segment.
    static StepSchedule uniform(double t0, double t_end, std::size_t steps, int columns);
};

struct TrajectorySegment {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> derivatives;
    std::vector<Vector> second_derivatives;
};

class Trajectory {
public:
    enum class Side { left, right };

    Trajectory() = default;
    Trajectory(std::size_t dimension, std::vector<TrajectorySegment> segments, StepSchedule schedule);

    std::size_t dimension() const noexcept { return dimension_; }
    const std::vector<TrajectorySegment>& segments() const noexcept { return segments_; }
    const StepSchedule& schedule() const noexcept { return schedule_; }
    std::size_t accepted_points() const;

    double start_time() const;
    double end_time() const;

    /// Value at t. At a segment boundary (event time) `side` selects the
    /// post-event (right) or pre-event (left) state. Throws outside the span.
    Vector interpolate(double t, Side side = Side::right) const;

    /// Componentwise max |z_i| over the interval, including maxima of the dense
    /// output inside steps. Only the first `leading` components when given.
    Vector abs_max(std::size_t leading = 0) const;

    /// Copy with every time shifted so the trajectory starts at `new_start`.
    Trajectory shifted_to(double new_start) const;

    int experiment_id = 0;

private:
    std::size_t dimension_ = 0;
    std::vector<TrajectorySegment> segments_;
    StepSchedule schedule_;
};

/// Integrates z' = F(t, z) from (t0, z0) to t_end with fixed-time breakpoints.
/// With `replay`, the recorded step grid is followed without error control.
Trajectory integrate(const OdeSystem& system, double t0, const Vector& z0, double t_end,
                     const std::vector<Breakpoint>& breakpoints, const IntegratorConfig& cfg,
                     const StepSchedule* replay = nullptr);

/// Mass-action model as an ODE system (analytic f_y, exact second derivative).
class ModelSystem final : public OdeSystem {
public:
    ModelSystem(const KineticModel& model, Vector p) : model_(model), p_(std::move(p)) {}

    std::size_t dimension() const override { return model_.species_count(); }
    void rhs(double t, const Vector& z, Vector& dz) const override;
    void iteration_jacobian(double t, const Vector& z, Matrix& jac) const override;
    void second_derivative(double t, const Vector& z, const Vector& dz, double step_hint,
                           Vector& d2z) const override;
    Vector absolute_tolerances(double atol) const override;

private:
    const KineticModel& model_;
    Vector p_;
};

/// Model events inside (t0, t_end] as breakpoints.
std::vector<Breakpoint> model_breakpoints(const KineticModel& model, const Vector& p, double t0, double t_end);

Trajectory integrate(const KineticModel& model, const Vector& p, double t0, double t_end,
                     const IntegratorConfig& cfg);

Trajectory integrate(const KineticModel& model, const Vector& p, double t0, double t_end,
                     const IntegratorConfig& cfg, const Vector& y0);

struct ExperimentSetup {
    double t0 = 0.0;
    double t_end = 1.0;
    std::optional<Vector> y0;  // model initial values when absent
};

/// One independent trajectory per experiment; failures carry the experiment index.
std::vector<Trajectory> integrate_experiments(const KineticModel& model, const Vector& p,
                                              const std::vector<ExperimentSetup>& experiments,
                                              const IntegratorConfig& cfg);

/// CSV `time,<names...>`, one row per accepted point plus `extra_times`
/// (interpolated); event boundaries appear twice (left then right value).
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const std::vector<std::string>& names,
                          const std::vector<double>& extra_times = {});

}  // namespace kinfit
