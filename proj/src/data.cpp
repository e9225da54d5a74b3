#include "kinfit/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "kinfit/error.hpp"

namespace kinfit {

std::vector<std::string> ExperimentData::experiments() const {
    std::vector<std::string> ids;
    for (const auto& r : records)
        if (std::find(ids.begin(), ids.end(), r.experiment) == ids.end()) ids.push_back(r.experiment);
    return ids;
}

namespace {

std::string trim(std::string s) {
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && ws(static_cast<unsigned char>(s[b]))) ++b;
    return s.substr(b);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') out.push_back(trim(cur)), cur.clear();
        else cur += c;
    }
    out.push_back(trim(cur));
    return out;
}

double number(const std::string& s, int line, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw ParseError(std::string("invalid ") + what + " '" + s + "'", line);
    return v;
}

bool is_missing(const std::string& s) {
    const std::string l = lower(s);
    return l.empty() || l == "nan" || l == "na" || l == "-";
}

}  // namespace

ExperimentData parse_data_csv(std::string_view text) {
    ExperimentData data;
    std::istringstream in{std::string(text)};
    std::string line;
    int number_of_line = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++number_of_line;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (!header) {
            const std::vector<std::string> expected{"experiment", "time", "observable", "value", "tolerance"};
            for (auto& f : fields) f = lower(f);
            if (fields != expected)
                throw ParseError("data header must be 'experiment,time,observable,value,tolerance'", number_of_line);
            header = true;
            continue;
        }
        if (fields.size() == 4) fields.emplace_back();
        if (fields.size() != 5) throw ParseError("expected 5 fields", number_of_line);
        if (fields[0].empty()) throw ParseError("missing experiment id", number_of_line);
        if (fields[2].empty()) throw ParseError("missing observable", number_of_line);
        if (is_missing(fields[3])) continue;
        Measurement m;
        m.experiment = fields[0];
        m.time = number(fields[1], number_of_line, "time");
        m.observable = fields[2];
        m.value = number(fields[3], number_of_line, "value");
        if (!fields[4].empty()) {
            const double tol = number(fields[4], number_of_line, "tolerance");
            if (tol < 0.0) throw ParseError("negative tolerance", number_of_line);
            m.tolerance = tol;
        }
        data.records.push_back(std::move(m));
    }
    if (!header) throw ParseError("data file has no header");
    return data;
}

ExperimentData load_data(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open data file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_data_csv(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_data_csv(std::ostream& os, const ExperimentData& data) {
    os << "experiment,time,observable,value,tolerance\n";
    const auto prec = os.precision();
    os << std::setprecision(17);
    for (const auto& r : data.records) {
        os << r.experiment << ',' << r.time << ',' << r.observable << ',' << r.value << ',';
        if (r.tolerance) os << *r.tolerance;
        os << '\n';
    }
    os.precision(prec);
}

ExperimentData add_multiplicative_noise(const ExperimentData& data, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ExperimentData out = data;
    for (auto& r : out.records) r.value *= 1.0 + sigma * normal(rng);
    return out;
}

ExperimentData sample_observables(const KineticModel& model, const Trajectory& traj,
                                  const std::vector<std::string>& observables, const std::vector<double>& times,
                                  const std::string& experiment) {
    ExperimentData out;
    for (double t : times) {
        const Vector y = traj.interpolate(t, Trajectory::Side::left);
        for (const auto& name : observables) {
            const auto map = model.output_map(name);
            if (!map) throw ParseError("unknown observable '" + name + "'");
            out.records.push_back({experiment, t, name, map->dot(y), std::nullopt});
        }
    }
    return out;
}

ResolvedData resolve_data(const KineticModel& model, const ExperimentData& data, double t0,
                          const std::vector<ExperimentSetup>& setups) {
    ResolvedData out;
    out.experiment_ids = data.experiments();
    out.experiments.resize(out.experiment_ids.size());
    for (std::size_t e = 0; e < out.experiments.size(); ++e) {
        if (e < setups.size()) {
            out.experiments[e] = setups[e];
        } else {
            out.experiments[e].t0 = t0;
            out.experiments[e].t_end = t0;
        }
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t e = 0; e < out.experiment_ids.size(); ++e) index[out.experiment_ids[e]] = e;

    std::vector<ResidualRow> constraints, weighted;
    for (std::size_t k = 0; k < data.records.size(); ++k) {
        const Measurement& m = data.records[k];
        const auto map = model.output_map(m.observable);
        if (!map) throw ParseError("unknown observable '" + m.observable + "'");
        const std::size_t e = index.at(m.experiment);
        auto& setup = out.experiments[e];
        if (m.time < setup.t0)
            throw ParseError("measurement at t=" + std::to_string(m.time) + " precedes the start of experiment '" +
                             m.experiment + "'");
        if (e >= setups.size()) setup.t_end = std::max(setup.t_end, m.time);
        else if (m.time > setup.t_end)
            throw ParseError("measurement after the end of experiment '" + m.experiment + "'");

        double delta = m.tolerance ? *m.tolerance : std::max(std::abs(m.value), model.output_threshold(*map));
        ResidualRow row{e, m.time, *map, m.value, 1.0, delta == 0.0, k};
        if (!row.constraint) row.weight = 1.0 / delta;
        (row.constraint ? constraints : weighted).push_back(std::move(row));
    }
    out.constraint_count = constraints.size();
    out.rows = std::move(constraints);
    for (auto& r : weighted) out.rows.push_back(std::move(r));
    return out;
}

IdentificationProblem::IdentificationProblem(KineticModel model, ResolvedData data, IntegratorConfig cfg)
    : model_(std::move(model)), data_(std::move(data)), cfg_(cfg) {
    cfg_.validate();
    const std::size_t ne = data_.experiments.size();
    rows_by_experiment_.resize(ne);
    times_by_experiment_.resize(ne);
    time_index_.resize(data_.rows.size());
    for (std::size_t r = 0; r < data_.rows.size(); ++r) {
        rows_by_experiment_[data_.rows[r].experiment].push_back(r);
        times_by_experiment_[data_.rows[r].experiment].push_back(data_.rows[r].time);
    }
    for (auto& t : times_by_experiment_) {
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
    }
    for (std::size_t r = 0; r < data_.rows.size(); ++r) {
        const auto& times = times_by_experiment_[data_.rows[r].experiment];
        time_index_[r] = static_cast<std::size_t>(
            std::lower_bound(times.begin(), times.end(), data_.rows[r].time) - times.begin());
    }
}

Vector IdentificationProblem::to_parameters(const Vector& u) const {
    Vector p(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
        p[i] = transform_forward(model_.parameters()[static_cast<std::size_t>(i)].transform, u[i]);
    return p;
}

Vector IdentificationProblem::to_internal(const Vector& p) const {
    Vector u(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i)
        u[i] = transform_backward(model_.parameters()[static_cast<std::size_t>(i)].transform, p[i]);
    return u;
}

Vector IdentificationProblem::transform_derivatives(const Vector& u) const {
    Vector d(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
        d[i] = transform_derivative(model_.parameters()[static_cast<std::size_t>(i)].transform, u[i]);
    return d;
}

Vector IdentificationProblem::predictions(const Vector& p) const {
    Vector out(static_cast<Eigen::Index>(data_.size()));
    for (std::size_t e = 0; e < data_.experiments.size(); ++e) {
        if (rows_by_experiment_[e].empty()) continue;
        const auto& setup = data_.experiments[e];
        Trajectory traj;
        try {
            traj = integrate(model_, p, setup.t0, setup.t_end, cfg_, setup.y0 ? *setup.y0 : model_.initial_state());
        } catch (const IntegrationError& err) {
            throw IntegrationError("experiment '" + data_.experiment_ids[e] + "': " + err.what(), err.time());
        }
        for (std::size_t r : rows_by_experiment_[e]) {
            const Vector y = traj.interpolate(data_.rows[r].time, Trajectory::Side::left);
            out[static_cast<Eigen::Index>(r)] = data_.rows[r].output.dot(y);
        }
    }
    return out;
}

Vector IdentificationProblem::residual(const Vector& u) const {
    return evaluate(u, false, JacobianMethod::variational).F;
}

ResidualEvaluation IdentificationProblem::evaluate(const Vector& u, bool with_jacobian, JacobianMethod method) const {
    const Vector p = to_parameters(u);
    const auto L = static_cast<Eigen::Index>(data_.size());
    const auto q = static_cast<Eigen::Index>(model_.parameter_count());
    ResidualEvaluation out;
    out.F.resize(L);

    // F always comes from the plain state integration so that it does not depend on
    // whether a Jacobian was requested.
    const Vector pred = predictions(p);
    for (Eigen::Index r = 0; r < L; ++r) {
        const auto& row = data_.rows[static_cast<std::size_t>(r)];
        out.F[r] = row.weight * (pred[r] - row.value);
    }
    if (!with_jacobian) return out;

    out.J.resize(L, q);
    const Vector dphi = transform_derivatives(u);
    for (std::size_t e = 0; e < data_.experiments.size(); ++e) {
        if (rows_by_experiment_[e].empty()) continue;
        const auto& setup = data_.experiments[e];
        const Vector y0 = setup.y0 ? *setup.y0 : model_.initial_state();
        SensitivityResult sens;
        try {
            sens = method == JacobianMethod::variational
                       ? sensitivities_var_eq(model_, p, setup.t0, setup.t_end, times_by_experiment_[e], cfg_, y0,
                                              Trajectory::Side::left)
                       : sensitivities_fd(model_, p, setup.t0, setup.t_end, times_by_experiment_[e], cfg_,
                                          fd_feedback, y0, Trajectory::Side::left);
        } catch (const IntegrationError& err) {
            throw IntegrationError("experiment '" + data_.experiment_ids[e] + "': " + err.what(), err.time());
        }
        for (std::size_t r : rows_by_experiment_[e]) {
            const auto& row = data_.rows[r];
            const std::size_t k = time_index_[r];
            const auto rr = static_cast<Eigen::Index>(r);
            out.J.row(rr) = row.weight * (row.output * sens.S[k]).cwiseProduct(dphi.transpose());
        }
    }
    return out;
}

AssembledResidual assemble_residual(const KineticModel& model, const Vector& p, const ExperimentData& data,
                                    const IntegratorConfig& cfg, double t0) {
    IdentificationProblem problem(model, resolve_data(model, data, t0), cfg);
    if (problem.residual_count() == 0) throw NoDataError();
    AssembledResidual out;
    out.F = problem.residual(problem.to_internal(p));
    for (const auto& row : problem.data().rows) out.constraint.push_back(row.constraint);
    return out;
}

Matrix jacobian_at(const KineticModel& model, const Vector& p, const ExperimentData& data,
                   const IntegratorConfig& cfg, JacobianMethod method, double t0) {
    IdentificationProblem problem(model, resolve_data(model, data, t0), cfg);
    if (problem.residual_count() == 0) return Matrix(0, static_cast<Eigen::Index>(model.parameter_count()));
    return problem.evaluate(problem.to_internal(p), true, method).J;
}

}  // namespace kinfit
