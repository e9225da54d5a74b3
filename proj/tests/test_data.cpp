#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kinfit/kinfit.hpp"
#include "oracles.hpp"

using namespace kinfit;

namespace {

const char* constant_model = "@species\nA = 2 thres=1e-3\n@parameters\np = 1\n";

IntegratorConfig tight() {
    IntegratorConfig c;
    c.rtol = 1e-9;
    return c;
}

}  // namespace

TEST_CASE("csv parsing") {
    const auto d = parse_data_csv(
        "Experiment,Time,Observable,Value,Tolerance\n"
        "# comment\n"
        "1, 0.5, A, 1.25, 0.1\n"
        "1,1.0,A,2.5\n"
        "2,1.0,A,nan,\n"
        "2,2.0,B,-,0.1\n"
        "2,3.0,B,7,\n");
    REQUIRE(d.records.size() == 3);
    CHECK(d.records[0].time == 0.5);
    CHECK(d.records[0].value == 1.25);
    CHECK(*d.records[0].tolerance == 0.1);
    CHECK_FALSE(d.records[1].tolerance.has_value());
    CHECK(d.records[2].experiment == "2");
    CHECK(d.experiments() == std::vector<std::string>{"1", "2"});
}

TEST_CASE("csv errors") {
    CHECK_THROWS_AS(parse_data_csv("a,b,c\n"), ParseError);
    CHECK_THROWS_AS(parse_data_csv(""), ParseError);
    CHECK_THROWS_AS(parse_data_csv("experiment,time,observable,value,tolerance\n1,x,A,1,\n"), ParseError);
    CHECK_THROWS_AS(parse_data_csv("experiment,time,observable,value,tolerance\n1,1,A,1,-0.5\n"), ParseError);
    CHECK_THROWS_WITH_AS(load_data("/nonexistent/file.csv"), doctest::Contains("cannot open data file"), ParseError);
}

TEST_CASE("csv round trip is exact") {
    ExperimentData d;
    d.records.push_back({"1", 0.1, "A", 1.0 / 3.0, std::nullopt});
    d.records.push_back({"x", 2.0, "B", -std::exp(1.0), 1e-3});
    std::ostringstream os;
    write_data_csv(os, d);
    const auto r = parse_data_csv(os.str());
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[0].value == d.records[0].value);
    CHECK(r.records[1].value == d.records[1].value);
    CHECK(*r.records[1].tolerance == 1e-3);
}

TEST_CASE("weighted residual entry") {
    const auto m = parse_model(constant_model);
    ExperimentData d;
    d.records.push_back({"1", 1.0, "A", 1.0, 0.5});
    const auto r = assemble_residual(m, m.nominal_parameters(), d, tight());
    REQUIRE(r.F.size() == 1);
    CHECK(r.F[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_FALSE(r.constraint[0]);
}

TEST_CASE("exact data gives a vanishing residual") {
    const auto m = load_model(KINFIT_MODELS_DIR "/decay.model");
    const auto d = load_data(KINFIT_MODELS_DIR "/decay_data.csv");
    IntegratorConfig c;
    c.rtol = 1e-10;
    const auto r = assemble_residual(m, Vector::Constant(1, 1.0), d, c);
    CHECK(r.F.cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("default tolerances") {
    const auto m = parse_model(constant_model);
    ExperimentData d;
    d.records.push_back({"1", 1.0, "A", 0.0, std::nullopt});   // falls back to the threshold
    d.records.push_back({"1", 1.0, "A", -4.0, std::nullopt});  // |z|
    d.records.push_back({"1", 2.0, "A", 2.0, 0.0});            // constraint
    const auto rd = resolve_data(m, d);
    REQUIRE(rd.size() == 3);
    CHECK(rd.constraint_count == 1);
    CHECK(rd.rows[0].constraint);
    CHECK(rd.rows[0].record == 2);
    CHECK(rd.rows[1].weight == doctest::Approx(1e3));
    CHECK(rd.rows[2].weight == doctest::Approx(0.25));
    CHECK(rd.experiments[0].t_end == 2.0);
}

TEST_CASE("data problems are reported") {
    const auto m = parse_model(constant_model);
    ExperimentData d;
    d.records.push_back({"1", 1.0, "Q", 1.0, std::nullopt});
    CHECK_THROWS_AS(resolve_data(m, d), ParseError);
    CHECK_THROWS_AS(assemble_residual(m, m.nominal_parameters(), ExperimentData{}, tight()), NoDataError);
}

TEST_CASE("observable rows combine species") {
    const auto m = load_model(KINFIT_MODELS_DIR "/chain.model");
    const auto traj = integrate(m, m.nominal_parameters(), 0.0, 1.0, tight());
    const auto d = sample_observables(m, traj, {"Y", "B"}, {0.5, 1.0});
    REQUIRE(d.records.size() == 4);
    const Vector y = traj.interpolate(1.0);
    CHECK(d.records[2].value == doctest::Approx(y[1] + 2 * y[2]).epsilon(1e-14));
    const auto r = assemble_residual(m, m.nominal_parameters(), d, tight());
    CHECK(r.F.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("measurements at an event time use the left limit") {
    const auto m = parse_model("@species\nA = 1\n@parameters\nk = 1\n@events\nat t=1: A := A + 5\n");
    ExperimentData d;
    d.records.push_back({"1", 1.0, "A", 1.0, 1.0});
    const auto r = assemble_residual(m, m.nominal_parameters(), d, tight());
    CHECK(std::abs(r.F[0]) <= 1e-12);
}

TEST_CASE("multiplicative noise is reproducible") {
    ExperimentData d;
    for (int i = 0; i < 5; ++i) d.records.push_back({"1", double(i), "A", 2.0, std::nullopt});
    const auto a = add_multiplicative_noise(d, 0.05, 42);
    const auto b = add_multiplicative_noise(d, 0.05, 42);
    const auto c = add_multiplicative_noise(d, 0.05, 43);
    for (std::size_t i = 0; i < 5; ++i) CHECK(a.records[i].value == b.records[i].value);
    CHECK(a.records[0].value != c.records[0].value);
    CHECK(add_multiplicative_noise(d, 0.0, 1).records[3].value == 2.0);
}

TEST_CASE("problem jacobian matches differences of the residual") {
    const auto m = load_model(KINFIT_MODELS_DIR "/dosing.model");
    ExperimentData d;
    for (double t : {0.5, 1.0, 1.5, 2.0}) d.records.push_back({"1", t, "A", 0.4, std::nullopt});
    IntegratorConfig c;
    c.rtol = 1e-10;
    IdentificationProblem problem(m, resolve_data(m, d), c);
    const Vector u = problem.to_internal(m.nominal_parameters());
    const Matrix J = problem.evaluate(u, true, JacobianMethod::variational).J;
    const Matrix Jo = oracle::central_jacobian([&](const Vector& x) { return problem.residual(x); }, u);
    CHECK((J - Jo).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, Jo.cwiseAbs().maxCoeff()));
}
