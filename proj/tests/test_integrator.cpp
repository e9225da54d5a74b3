#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "kinfit/kinfit.hpp"
#include "oracles.hpp"

using namespace kinfit;

namespace {

KineticModel decay_model(double k = 1.0, double a0 = 1.0) {
    return parse_model("@species\nA=" + std::to_string(a0) + "\n@parameters\nk=" + std::to_string(k) +
                       "\n@reactions\nA -> 0 rate k\n");
}

IntegratorConfig tol(double rtol) {
    IntegratorConfig c;
    c.rtol = rtol;
    return c;
}

double decay_error(double rtol) {
    const auto m = decay_model();
    const auto traj = integrate(m, m.nominal_parameters(), 0.0, 1.0, tol(rtol));
    return std::abs(traj.interpolate(1.0)[0] - std::exp(-1.0));
}

FunctionSystem stiff_system() {
    return FunctionSystem(
        1, [](double t, const Vector& y, Vector& f) { f.resize(1); f[0] = -1000.0 * (y[0] - std::sin(t)) + std::cos(t); },
        [](double, const Vector&, Matrix& J) { J.resize(1, 1); J(0, 0) = -1000.0; });
}

}  // namespace

TEST_CASE("decay reaches exp(-1)") {
    CHECK(decay_error(1e-8) <= 1e-6);
}

TEST_CASE("tolerance proportionality") {
    const double e4 = decay_error(1e-4), e6 = decay_error(1e-6), e8 = decay_error(1e-8);
    CHECK(e4 <= 100 * 1e-4);
    CHECK(e6 <= 100 * 1e-6);
    CHECK(e8 <= 100 * 1e-8);
    CHECK(e6 < e4);
    CHECK(e8 < e6);
}

TEST_CASE("stiff problem matches fine RK4 reference") {
    const auto sys = stiff_system();
    Vector y0 = Vector::Zero(1);
    const auto traj = integrate(sys, 0.0, y0, 1.0, {}, tol(1e-6));
    const Vector ref = oracle::rk4(
        [](double t, const Vector& y) {
            Vector f(1);
            f[0] = -1000.0 * (y[0] - std::sin(t)) + std::cos(t);
            return f;
        },
        0.0, y0, 1.0, 1e-6);
    CHECK(std::abs(traj.interpolate(1.0)[0] - ref[0]) <= 1e-5);
    // the stiff solver should not need explicit-method step counts
    CHECK(traj.accepted_points() < 500);
}

TEST_CASE("piecewise constant solution with an event") {
    const auto m = parse_model("@species\nA=1\n@parameters\nk=1\n@events\nat t=1: A := A + 1\n");
    const auto traj = integrate(m, m.nominal_parameters(), 0.0, 2.0, tol(1e-6));
    CHECK(traj.segments().size() == 2);
    CHECK(traj.interpolate(2.0)[0] == 2.0);
    CHECK(traj.interpolate(1.0, Trajectory::Side::left)[0] == 1.0);
    CHECK(traj.interpolate(1.0, Trajectory::Side::right)[0] == 2.0);
}

TEST_CASE("event time is hit exactly and the jump is exact") {
    const auto m = parse_model(R"(
@species
A = 1
B = 0
@parameters
k = 0.7
j = 0.3
@reactions
A -> B rate k
@events
at t=0.3333333333333333: A := 2*A + 0.5*B + j; B := B
)");
    const Vector p = m.nominal_parameters();
    const auto traj = integrate(m, p, 0.0, 1.0, tol(1e-8));
    REQUIRE(traj.segments().size() == 2);
    const double tb = m.events()[0].time;
    CHECK(traj.segments()[0].times.back() == tb);
    CHECK(traj.segments()[1].times.front() == tb);
    Vector left = traj.segments()[0].states.back();
    m.apply_event(0, p, left);
    CHECK((traj.segments()[1].states.front() - left).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("events outside the span are ignored and t_end events form a final point") {
    const auto m = parse_model("@species\nA=1\n@parameters\nk=1\n@reactions\nA -> 0 rate k\n@events\nat t=5: A := 0\n");
    const auto traj = integrate(m, m.nominal_parameters(), 0.0, 2.0, tol(1e-6));
    CHECK(traj.segments().size() == 1);
    const auto at_end = integrate(m, m.nominal_parameters(), 0.0, 5.0, tol(1e-6));
    CHECK(at_end.interpolate(5.0, Trajectory::Side::right)[0] == 0.0);
    CHECK(at_end.interpolate(5.0, Trajectory::Side::left)[0] > 0.0);
}

TEST_CASE("interpolation is exact at grid points and accurate in between") {
    const auto m = decay_model();
    const auto traj = integrate(m, m.nominal_parameters(), 0.0, 1.0, tol(1e-8));
    for (const auto& seg : traj.segments())
        for (std::size_t i = 0; i < seg.times.size(); ++i) CHECK(traj.interpolate(seg.times[i]) == seg.states[i]);
    const auto half = integrate(m, m.nominal_parameters(), 0.0, 0.5, tol(1e-8));
    CHECK(std::abs(traj.interpolate(0.5)[0] - half.interpolate(0.5)[0]) <= 1e-7);
    CHECK(std::abs(traj.interpolate(0.5)[0] - std::exp(-0.5)) <= 1e-6);
    for (double t = 0.0; t <= 1.0; t += 0.01) CHECK(std::abs(traj.interpolate(t)[0] - std::exp(-t)) <= 1e-6);
    CHECK_THROWS_AS(traj.interpolate(1.5), DomainError);
    CHECK_THROWS_AS(traj.interpolate(-0.1), DomainError);
}

TEST_CASE("quintic dense output reproduces quintic polynomials") {
    auto poly = [](double t) { return 1 + t - 2 * t * t + 0.5 * std::pow(t, 3) + 0.25 * std::pow(t, 4) - 0.1 * std::pow(t, 5); };
    auto d1 = [](double t) { return 1 - 4 * t + 1.5 * t * t + std::pow(t, 3) - 0.5 * std::pow(t, 4); };
    auto d2 = [](double t) { return -4 + 3 * t + 3 * t * t - 2 * std::pow(t, 3); };
    TrajectorySegment seg;
    for (double t : {0.0, 0.7, 2.0}) {
        seg.times.push_back(t);
        seg.states.push_back(Vector::Constant(1, poly(t)));
        seg.derivatives.push_back(Vector::Constant(1, d1(t)));
        seg.second_derivatives.push_back(Vector::Constant(1, d2(t)));
    }
    const Trajectory traj(1, {seg}, {});
    for (double t = 0.0; t <= 2.0; t += 0.05) CHECK(traj.interpolate(t)[0] == doctest::Approx(poly(t)).epsilon(1e-12));
}

TEST_CASE("multiple experiments") {
    const auto m = decay_model();
    ExperimentSetup e1{0.0, 1.0, Vector::Constant(1, 1.0)};
    ExperimentSetup e2{0.0, 1.0, Vector::Constant(1, 2.0)};
    const auto trajs = integrate_experiments(m, m.nominal_parameters(), {e1, e2}, tol(1e-8));
    REQUIRE(trajs.size() == 2);
    CHECK(trajs[0].interpolate(1.0)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
    CHECK(trajs[1].interpolate(1.0)[0] == doctest::Approx(2 * std::exp(-1.0)).epsilon(1e-6));
    const auto single = integrate(m, m.nominal_parameters(), 0.0, 1.0, tol(1e-8), Vector::Constant(1, 2.0));
    CHECK(trajs[1].interpolate(1.0) == single.interpolate(1.0));
    CHECK(integrate_experiments(m, m.nominal_parameters(), {}, tol(1e-8)).empty());

    ExperimentSetup late{5.0, 6.0, std::nullopt};
    const auto shifted = integrate_experiments(m, m.nominal_parameters(), {late}, tol(1e-8))[0].shifted_to(0.0);
    CHECK(shifted.start_time() == 0.0);
    CHECK(shifted.end_time() == doctest::Approx(1.0));
    CHECK(shifted.interpolate(shifted.end_time())[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("failures are reported with the experiment index") {
    const auto m = parse_model("@species\nA=1\n@parameters\nk=1\n@reactions\n2 A -> 3 A rate k\n");
    ExperimentSetup ok{0.0, 0.5, std::nullopt};
    ExperimentSetup blowup{0.0, 2.0, std::nullopt};
    try {
        integrate_experiments(m, m.nominal_parameters(), {ok, blowup}, tol(1e-6));
        FAIL("expected an integration failure");
    } catch (const IntegrationError& e) {
        CHECK(std::string(e.what()).find("experiment 1") == 0);
        CHECK(e.time() <= 1.0 + 1e-9);
    }
}

TEST_CASE("step cap is enforced") {
    const auto m = decay_model();
    IntegratorConfig c = tol(1e-10);
    c.max_steps = 3;
    CHECK_THROWS_AS(integrate(m, m.nominal_parameters(), 0.0, 10.0, c), IntegrationError);
}

TEST_CASE("degenerate span and validation") {
    const auto m = decay_model();
    const auto traj = integrate(m, m.nominal_parameters(), 1.0, 1.0, tol(1e-6));
    CHECK(traj.accepted_points() == 1);
    CHECK_THROWS_AS(integrate(m, m.nominal_parameters(), 1.0, 0.5, tol(1e-6)), DomainError);
    CHECK_THROWS_AS(tol(1e-16).validate(), DomainError);
}

TEST_CASE("runs are deterministic") {
    const auto m = oracle::random_network(3, 4, 3, 5);
    const auto a = integrate(m, m.nominal_parameters(), 0.0, 2.0, tol(1e-6));
    const auto b = integrate(m, m.nominal_parameters(), 0.0, 2.0, tol(1e-6));
    REQUIRE(a.accepted_points() == b.accepted_points());
    for (std::size_t s = 0; s < a.segments().size(); ++s)
        for (std::size_t i = 0; i < a.segments()[s].times.size(); ++i) {
            CHECK(a.segments()[s].times[i] == b.segments()[s].times[i]);
            CHECK(a.segments()[s].states[i] == b.segments()[s].states[i]);
        }
}

TEST_CASE("linear in the initial state on a fixed step sequence") {
    Matrix A(2, 2);
    A << -2, 1, 0.5, -3;
    FunctionSystem sys(2, [&](double, const Vector& y, Vector& f) { f = A * y; },
                       [&](double, const Vector&, Matrix& J) { J = A; });
    Vector y0(2);
    y0 << 1, -0.5;
    const StepSchedule sched = StepSchedule::uniform(0.0, 2.0, 40, 4);
    const auto a = integrate(sys, 0.0, y0, 2.0, {}, tol(1e-6), &sched);
    const auto b = integrate(sys, 0.0, 2 * y0, 2.0, {}, tol(1e-6), &sched);
    REQUIRE(a.accepted_points() == 41);
    for (std::size_t i = 0; i < a.segments()[0].states.size(); ++i) {
        const Vector& sa = a.segments()[0].states[i];
        const Vector& sb = b.segments()[0].states[i];
        CHECK((sb - 2 * sa).norm() <= 1e-12 * std::max(1.0, sb.norm()));
    }
}

TEST_CASE("trajectory csv duplicates event rows") {
    const auto m = parse_model("@species\nA=1\n@parameters\nk=1\n@reactions\nA -> 0 rate k\n@events\nat t=1: A := A + 1\n");
    const auto traj = integrate(m, m.nominal_parameters(), 0.0, 2.0, tol(1e-6));
    std::ostringstream os;
    write_trajectory_csv(os, traj, {"A"}, {0.5});
    const std::string csv = os.str();
    CHECK(csv.rfind("time,A\n", 0) == 0);
    std::size_t rows_at_1 = 0, rows_at_half = 0;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("1,", 0) == 0) ++rows_at_1;
        if (line.rfind("0.5,", 0) == 0) ++rows_at_half;
    }
    CHECK(rows_at_1 == 2);
    CHECK(rows_at_half == 1);
}
