#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "kinfit/kinfit.hpp"

namespace kinfit::cli {

namespace {

namespace fs = std::filesystem;

struct Grid {
    double t0 = 0.0;
    double t_end = 1.0;
    std::size_t points = 0;

    std::vector<double> times() const {
        std::vector<double> t;
        if (points == 1) return {t_end};
        for (std::size_t i = 0; i < points; ++i)
            t.push_back(i + 1 == points ? t_end
                                        : t0 + (t_end - t0) * static_cast<double>(i) / static_cast<double>(points - 1));
        return t;
    }
};

Grid parse_grid(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string s; std::getline(ss, s, ':');) parts.push_back(s);
    if (parts.size() != 3) throw ParseError("--grid expects t0:tend:n, got '" + text + "'");
    Grid g;
    try {
        std::size_t used = 0;
        g.t0 = std::stod(parts[0], &used);
        if (used != parts[0].size()) throw std::invalid_argument(parts[0]);
        g.t_end = std::stod(parts[1], &used);
        if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
        const long n = std::stol(parts[2], &used);
        if (used != parts[2].size() || n < 1) throw std::invalid_argument(parts[2]);
        g.points = static_cast<std::size_t>(n);
    } catch (const std::logic_error&) {
        throw ParseError("--grid expects t0:tend:n, got '" + text + "'");
    }
    if (!(g.t_end > g.t0)) throw ParseError("--grid needs tend > t0");
    return g;
}

struct Options {
    std::string model, data, out = ".", grid, jacobian = "vareq", params, observables;
    double rtol = 1e-6, atol = 1e-12, xtol = 1e-4, lambda_min = 1e-4;
    std::optional<double> t_end, t0;
    std::size_t rank_min = 1, max_iter = 50;
    double noise = 0.0;
    std::uint64_t seed = 1;
    bool hard = false, feedback = false;
};

IntegratorConfig integrator_config(const Options& o) {
    IntegratorConfig cfg;
    cfg.rtol = o.rtol;
    cfg.atol = o.atol;
    cfg.validate();
    return cfg;
}

JacobianMethod jacobian_method(const std::string& s) {
    if (s == "vareq") return JacobianMethod::variational;
    if (s == "fd") return JacobianMethod::finite_difference;
    throw ParseError("unknown Jacobian method '" + s + "' (use vareq or fd)");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

std::ofstream open_output(const Options& o, const std::string& name) {
    fs::create_directories(o.out);
    const fs::path path = fs::path(o.out) / name;
    std::ofstream f(path);
    if (!f) throw ParseError("cannot write '" + path.string() + "'");
    return f;
}

std::string safe_name(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    return s;
}

// Span from --grid, or t0 (default 0) and --t-end.
std::pair<double, double> span(const Options& o, const std::optional<Grid>& grid) {
    if (grid) return {grid->t0, grid->t_end};
    const double t0 = o.t0.value_or(0.0);
    if (!o.t_end) throw ParseError("no time span: give --grid t0:tend:n or --t-end");
    if (!(*o.t_end > t0)) throw ParseError("--t-end must exceed the start time");
    return {t0, *o.t_end};
}

int cmd_simulate(const Options& o, std::ostream& out, std::ostream&) {
    const KineticModel model = load_model(o.model);
    const IntegratorConfig cfg = integrator_config(o);
    const Vector p = model.nominal_parameters();
    std::vector<std::string> names;
    for (const auto& s : model.species()) names.push_back(s.name);
    const std::optional<Grid> grid = o.grid.empty() ? std::nullopt : std::optional<Grid>(parse_grid(o.grid));

    if (!o.data.empty()) {
        const ResolvedData data = resolve_data(model, load_data(o.data), o.t0.value_or(0.0));
        const auto trajs = integrate_experiments(model, p, data.experiments, cfg);
        for (std::size_t e = 0; e < trajs.size(); ++e) {
            const std::string file = "trajectory_" + safe_name(data.experiment_ids[e]) + ".csv";
            auto f = open_output(o, file);
            write_trajectory_csv(f, trajs[e], names);
            out << "wrote " << (fs::path(o.out) / file).string() << '\n';
        }
        return exit_ok;
    }

    const auto [t0, t1] = span(o, grid);
    const Trajectory traj = integrate(model, p, t0, t1, cfg);
    const std::vector<double> extra = grid ? grid->times() : std::vector<double>{};
    {
        auto f = open_output(o, "trajectory.csv");
        write_trajectory_csv(f, traj, names, extra);
    }
    out << "wrote " << (fs::path(o.out) / "trajectory.csv").string() << " (" << traj.accepted_points()
        << " accepted points)\n";
    if (grid) {
        std::vector<std::string> observables = split_list(o.observables);
        if (observables.empty()) {
            for (const auto& ob : model.observables()) observables.push_back(ob.name);
            if (observables.empty()) observables = names;
        }
        ExperimentData samples = sample_observables(model, traj, observables, grid->times());
        if (o.noise > 0.0) samples = add_multiplicative_noise(samples, o.noise, o.seed);
        auto f = open_output(o, "samples.csv");
        write_data_csv(f, samples);
        out << "wrote " << (fs::path(o.out) / "samples.csv").string() << " (" << samples.records.size()
            << " records)\n";
    }
    return exit_ok;
}

int cmd_sens(const Options& o, std::ostream& out, std::ostream& err) {
    const KineticModel model = load_model(o.model);
    const IntegratorConfig cfg = integrator_config(o);
    const JacobianMethod method = jacobian_method(o.jacobian);
    const std::optional<Grid> grid = o.grid.empty() ? std::nullopt : std::optional<Grid>(parse_grid(o.grid));
    const auto [t0, t1] = span(o, grid);
    const Grid g = grid ? *grid : Grid{t0, t1, 101};
    const std::vector<double> times = g.times();

    std::vector<std::size_t> params;
    for (const auto& name : split_list(o.params)) {
        const auto idx = model.find_parameter(name);
        if (!idx) throw ParseError("unknown parameter '" + name + "'");
        params.push_back(*idx);
    }
    if (params.empty())
        for (std::size_t j = 0; j < model.parameter_count(); ++j) params.push_back(j);

    const Vector p = model.nominal_parameters();
    const SensitivityResult raw =
        method == JacobianMethod::variational
            ? sensitivities_var_eq(model, p, t0, t1, times, cfg)
            : sensitivities_fd(model, p, t0, t1, times, cfg, o.feedback);
    const ScaledSensitivity scaled = scale_sensitivities(raw, model);
    for (std::size_t i : scaled.undefined_rows)
        err << "warning: scaled sensitivities of species '" << model.species()[i].name
            << "' are undefined (identically zero with zero threshold)\n";

    auto f = open_output(o, "sensitivities.csv");
    f << "time,species,parameter,value\n" << std::setprecision(12);
    for (std::size_t k = 0; k < times.size(); ++k)
        for (std::size_t i = 0; i < model.species_count(); ++i)
            for (std::size_t j : params)
                f << times[k] << ',' << model.species()[i].name << ',' << model.parameters()[j].name << ','
                  << scaled.values[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << '\n';
    out << "wrote " << (fs::path(o.out) / "sensitivities.csv").string() << " (method " << to_string(method)
        << ")\n";
    return exit_ok;
}

GNConfig gn_config(const Options& o) {
    GNConfig g;
    g.xtol = o.xtol;
    g.lambda_min = o.lambda_min;
    g.rank_min = o.rank_min;
    g.max_iterations = o.max_iter;
    g.jacobian_method = jacobian_method(o.jacobian);
    g.hard_problem = o.hard;
    return g;
}

IdentificationProblem load_problem(const Options& o) {
    if (o.data.empty()) throw ParseError("--data is required");
    KineticModel model = load_model(o.model);
    ExperimentData data = load_data(o.data);
    if (o.noise > 0.0) data = add_multiplicative_noise(data, o.noise, o.seed);
    ResolvedData resolved = resolve_data(model, data, o.t0.value_or(0.0));
    if (resolved.size() == 0) throw NoDataError();
    IdentificationProblem problem(std::move(model), std::move(resolved), integrator_config(o));
    problem.fd_feedback = o.feedback;
    return problem;
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
    const IdentificationProblem problem = load_problem(o);
    const GNConfig cfg = gn_config(o);
    cfg.validate(problem.parameter_count());

    auto protocol = open_output(o, "protocol.txt");
    const std::string header = format_protocol_header();
    out << header << std::flush;
    protocol << header << std::flush;
    const FitReport report = fit(problem, cfg, [&](const ProtocolRow& row) {
        const std::string line = format_protocol_row(row);
        out << line << std::flush;
        protocol << line << std::flush;
    });
    std::ostringstream summary;
    summary << "\nRequested identification accuracy xtol = " << o.xtol << ".\n"
            << "Gauss-Newton iteration " << report.message << " after " << report.iterations << " steps";
    if (report.kappa >= 0.0) summary << ", incompatibility factor " << std::fixed << std::setprecision(5) << report.kappa;
    summary << ".\n";
    out << summary.str();
    protocol << summary.str();

    {
        auto f = open_output(o, "parameters.txt");
        f << format_parameters(problem.model(), report.p);
    }
    try {
        const FitStatistics stats = fit_statistics(report, problem);
        auto txt = open_output(o, "statistics.txt");
        write_statistics_text(txt, stats);
        auto csv = open_output(o, "statistics.csv");
        write_statistics_csv(csv, stats);
        out << '\n';
        write_statistics_text(out, stats);
    } catch (const DomainError& e) {
        err << "warning: statistics unavailable: " << e.what() << '\n';
    }

    switch (report.verdict) {
        case Verdict::converged: return exit_ok;
        case Verdict::integration_failure:
            err << "error: " << report.message << '\n';
            return exit_integration;
        default:
            err << "error: " << report.message << '\n';
            return exit_no_convergence;
    }
}

int cmd_rank(const Options& o, std::ostream& out, std::ostream&) {
    const IdentificationProblem problem = load_problem(o);
    const GNConfig cfg = gn_config(o);
    const ModelResidual f(problem, cfg.jacobian_method);
    const Vector u = problem.to_internal(problem.model().nominal_parameters());
    const ResidualEvaluation ev = f.evaluate(u, true);
    const Matrix Jhat = ev.J * f.scaling(u).asDiagonal();
    const ConstrainedLeastSquares ls(Jhat, f.constraint_count(), cfg.xtol);
    const double sc = ls.subcondition();
    out << "L = " << f.residual_count() << "\n"
        << "q = " << f.parameter_count() << "\n"
        << "constraints = " << f.constraint_count() << "\n"
        << "delta = " << cfg.xtol << "\n"
        << "rank = " << ls.rank() << "\n"
        << "subcondition = " << std::setprecision(6) << sc << "\n"
        << "rank deficient (delta*sc >= 1): " << (ls.certainly_rank_deficient() ? "yes" : "no") << "\n";
    return exit_ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Simulation, sensitivity analysis and parameter identification for kinetic networks", "kinfit"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* c) {
        c->add_option("--model", o.model, "model file")->required();
        c->add_option("--rtol", o.rtol, "relative integration tolerance");
        c->add_option("--atol", o.atol, "absolute integration tolerance");
        c->add_option("--out", o.out, "output directory");
        c->add_option("--t0", o.t0, "start time");
    };
    auto fitting = [&](CLI::App* c) {
        c->add_option("--data", o.data, "measurement CSV")->required();
        c->add_option("--xtol", o.xtol, "identification accuracy and rank threshold");
        c->add_option("--lambda-min", o.lambda_min, "minimal damping factor");
        c->add_option("--rank-min", o.rank_min, "minimal permitted rank");
        c->add_option("--max-iter", o.max_iter, "maximum Gauss-Newton iterations");
        c->add_option("--jacobian", o.jacobian, "vareq or fd");
        c->add_flag("--fd-feedback", o.feedback, "adapt finite-difference steps");
        c->add_option("--add-noise", o.noise, "relative Gaussian noise added to the data");
        c->add_option("--seed", o.seed, "noise seed");
        c->add_flag("--hard", o.hard, "start with damping 1e-2");
    };

    auto* sim = app.add_subcommand("simulate", "integrate the model");
    common(sim);
    sim->add_option("--data", o.data, "simulate every experiment of this data file");
    sim->add_option("--grid", o.grid, "output grid t0:tend:n");
    sim->add_option("--t-end", o.t_end, "end time");
    sim->add_option("--observables", o.observables, "comma-separated outputs sampled on the grid");
    sim->add_option("--add-noise", o.noise, "relative Gaussian noise on samples");
    sim->add_option("--seed", o.seed, "noise seed");

    auto* sens = app.add_subcommand("sens", "scaled sensitivity overview");
    common(sens);
    sens->add_option("--grid", o.grid, "output grid t0:tend:n");
    sens->add_option("--t-end", o.t_end, "end time");
    sens->add_option("--jacobian,--method", o.jacobian, "vareq or fd");
    sens->add_flag("--fd-feedback", o.feedback, "adapt finite-difference steps");
    sens->add_option("--params", o.params, "comma-separated parameter subset");

    auto* fitc = app.add_subcommand("fit", "identify parameters");
    common(fitc);
    fitting(fitc);

    auto* rank = app.add_subcommand("rank", "rank and subcondition at the initial guess");
    common(rank);
    fitting(rank);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(o, out, err);
        if (sens->parsed()) return cmd_sens(o, out, err);
        if (fitc->parsed()) return cmd_fit(o, out, err);
        return cmd_rank(o, out, err);
    } catch (const IntegrationError& e) {
        err << "error: " << e.what() << '\n';
        return exit_integration;
    } catch (const EvaluationError& e) {
        err << "error: " << e.what() << '\n';
        return exit_integration;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace kinfit::cli
