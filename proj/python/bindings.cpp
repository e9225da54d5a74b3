#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "kinfit/kinfit.hpp"

namespace py = pybind11;
using namespace kinfit;

namespace {

IntegratorConfig make_config(double rtol, double atol) {
    IntegratorConfig cfg;
    cfg.rtol = rtol;
    cfg.atol = atol;
    cfg.validate();
    return cfg;
}

JacobianMethod method_from(const std::string& s) {
    if (s == "vareq") return JacobianMethod::variational;
    if (s == "fd") return JacobianMethod::finite_difference;
    throw py::value_error("method must be 'vareq' or 'fd'");
}

std::vector<std::string> species_names(const KineticModel& m) {
    std::vector<std::string> out;
    for (const auto& s : m.species()) out.push_back(s.name);
    return out;
}

std::vector<std::string> parameter_names(const KineticModel& m) {
    std::vector<std::string> out;
    for (const auto& p : m.parameters()) out.push_back(p.name);
    return out;
}

py::dict simulate(const KineticModel& model, double t_end, double t0, std::optional<Vector> p,
                  std::optional<std::vector<double>> times, double rtol, double atol) {
    const Trajectory traj = integrate(model, p ? *p : model.nominal_parameters(), t0, t_end, make_config(rtol, atol));
    std::vector<double> ts;
    std::vector<Vector> ys;
    if (times) {
        ts = *times;
        for (double t : ts) ys.push_back(traj.interpolate(t));
    } else {
        for (const auto& seg : traj.segments())
            for (std::size_t i = 0; i < seg.times.size(); ++i) ts.push_back(seg.times[i]), ys.push_back(seg.states[i]);
    }
    Matrix Y(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(model.species_count()));
    for (std::size_t k = 0; k < ys.size(); ++k) Y.row(static_cast<Eigen::Index>(k)) = ys[k].transpose();
    py::dict d;
    d["times"] = Vector(Eigen::Map<const Vector>(ts.data(), static_cast<Eigen::Index>(ts.size())));
    d["states"] = Y;
    d["species"] = species_names(model);
    return d;
}

py::dict sensitivities(const KineticModel& model, double t_end, const std::vector<double>& times, double t0,
                       const std::string& method, bool scaled, double rtol, double atol) {
    const IntegratorConfig cfg = make_config(rtol, atol);
    const Vector p = model.nominal_parameters();
    const SensitivityResult raw = method_from(method) == JacobianMethod::variational
                                      ? sensitivities_var_eq(model, p, t0, t_end, times, cfg)
                                      : sensitivities_fd(model, p, t0, t_end, times, cfg, false);
    py::list S;
    if (scaled) {
        const ScaledSensitivity sc = scale_sensitivities(raw, model);
        for (const auto& m : sc.values) S.append(m);
    } else {
        for (const auto& m : raw.S) S.append(m);
    }
    py::dict d;
    d["times"] = times;
    d["S"] = S;
    d["species"] = species_names(model);
    d["parameters"] = parameter_names(model);
    return d;
}

GNConfig gn_config(double xtol, double lambda_min, std::size_t rank_min, std::size_t max_iterations,
                   const std::string& method) {
    GNConfig g;
    g.xtol = xtol;
    g.lambda_min = lambda_min;
    g.rank_min = rank_min;
    g.max_iterations = max_iterations;
    g.jacobian_method = method_from(method);
    return g;
}

py::dict fit_model(const KineticModel& model, const std::string& data_csv, double xtol, double lambda_min,
                   std::size_t rank_min, std::size_t max_iterations, const std::string& method, double rtol,
                   double atol, double t0) {
    const ExperimentData data = parse_data_csv(data_csv);
    IdentificationProblem problem(model, resolve_data(model, data, t0), make_config(rtol, atol));
    const FitReport report = fit(problem, gn_config(xtol, lambda_min, rank_min, max_iterations, method));
    py::dict d;
    d["verdict"] = to_string(report.verdict);
    d["converged"] = is_converged(report.verdict);
    d["parameters"] = report.p;
    d["names"] = parameter_names(model);
    d["iterations"] = report.iterations;
    d["rank"] = report.rank;
    d["kappa"] = report.kappa;
    d["residual_norm"] = report.normF;
    d["protocol"] = format_protocol(report.protocol);
    try {
        const FitStatistics s = fit_statistics(report, problem);
        py::list sd;
        for (const auto& x : s.std_devs) sd.append(x.absolute);
        d["std_devs"] = sd;
        d["correlation"] = s.correlation;
        d["correlated_groups"] = s.correlated_groups;
        std::ostringstream os;
        write_statistics_text(os, s);
        d["statistics"] = os.str();
    } catch (const DomainError&) {
        d["std_devs"] = py::none();
    }
    return d;
}

py::dict rank_report(const Matrix& J, double delta) {
    const PivotedQR qr = qr_decompose(J);
    py::dict d;
    d["rank"] = numerical_rank(qr, delta);
    d["subcondition"] = subcondition(qr);
    d["deficient"] = certainly_rank_deficient(qr, delta);
    d["diag"] = qr.diag;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Kinetic-network simulation, sensitivities and Gauss-Newton parameter identification";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NoDataError>(m, "NoDataError", PyExc_ValueError);
    py::register_exception<IntegrationError>(m, "IntegrationError", PyExc_RuntimeError);
    py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_ArithmeticError);

    py::class_<KineticModel>(m, "Model")
        .def_static("parse", &parse_model, py::arg("text"))
        .def_static("load", &load_model, py::arg("path"))
        .def_property_readonly("species", &species_names)
        .def_property_readonly("parameters", &parameter_names)
        .def_property_readonly("n", &KineticModel::species_count)
        .def_property_readonly("q", &KineticModel::parameter_count)
        .def("initial_state", &KineticModel::initial_state)
        .def("nominal_parameters", &KineticModel::nominal_parameters)
        .def("rhs", py::overload_cast<const Vector&, const Vector&>(&KineticModel::evaluate_rhs, py::const_),
             py::arg("y"), py::arg("p"))
        .def("jacobians",
             py::overload_cast<const Vector&, const Vector&>(&KineticModel::evaluate_rhs_jacobians, py::const_),
             py::arg("y"), py::arg("p"), "Returns (f_y, f_p).")
        .def("with_parameters", &KineticModel::with_parameters, py::arg("values"))
        .def("format_parameters", [](const KineticModel& self, const Vector& v) { return format_parameters(self, v); });

    m.def("simulate", &simulate, py::arg("model"), py::arg("t_end"), py::arg("t0") = 0.0, py::arg("p") = py::none(),
          py::arg("times") = py::none(), py::arg("rtol") = 1e-6, py::arg("atol") = 1e-12,
          "Integrates the model; returns accepted points or values at `times`.");
    m.def("sensitivities", &sensitivities, py::arg("model"), py::arg("t_end"), py::arg("times"),
          py::arg("t0") = 0.0, py::arg("method") = "vareq", py::arg("scaled") = false, py::arg("rtol") = 1e-6,
          py::arg("atol") = 1e-12);
    m.def("fit", &fit_model, py::arg("model"), py::arg("data_csv"), py::arg("xtol") = 1e-4,
          py::arg("lambda_min") = 1e-4, py::arg("rank_min") = 1, py::arg("max_iterations") = 50,
          py::arg("method") = "vareq", py::arg("rtol") = 1e-8, py::arg("atol") = 1e-12, py::arg("t0") = 0.0,
          "Fits the model parameters to CSV measurement data (text, not a path).");
    m.def("rank", &rank_report, py::arg("J"), py::arg("delta") = 1e-4,
          "Numerical rank and subcondition of a matrix by pivoted QR.");
    m.def("solve_min_norm",
          [](const Matrix& J, const Vector& rhs, std::size_t rank) { return solve_min_norm(qr_decompose(J), rhs, rank); },
          py::arg("J"), py::arg("rhs"), py::arg("rank"), "Returns -(J_rank)^+ rhs.");
}
