#include "kinfit/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "kinfit/error.hpp"

namespace kinfit {

namespace {

double int_pow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
}

double power(const RateFactor& f, double y) {
    return f.is_integer ? int_pow(y, f.integer_exponent) : std::pow(y, f.exponent);
}

double power_derivative(const RateFactor& f, double y) {
    if (f.is_integer) {
        if (f.integer_exponent == 0) return 0.0;
        return f.integer_exponent * int_pow(y, f.integer_exponent - 1);
    }
    return f.exponent * std::pow(y, f.exponent - 1.0);
}

template <class Named>
void check_unique(const std::vector<Named>& items, const char* what) {
    std::set<std::string> seen;
    for (const auto& item : items) {
        if (item.name.empty()) throw ModelError(std::string("empty ") + what + " name");
        if (!seen.insert(item.name).second)
            throw ModelError(std::string("duplicate ") + what + " name '" + item.name + "'");
    }
}

}  // namespace

KineticModel::KineticModel(std::vector<Species> species, std::vector<Parameter> parameters,
                           std::vector<Reaction> reactions, std::vector<Observable> observables,
                           std::vector<BreakpointEvent> events)
    : species_(std::move(species)),
      parameters_(std::move(parameters)),
      reactions_(std::move(reactions)),
      observables_(std::move(observables)),
      events_(std::move(events)) {
    if (species_.empty()) throw ModelError("model needs at least one species");
    if (parameters_.empty()) throw ModelError("model needs at least one parameter");
    check_unique(species_, "species");
    check_unique(parameters_, "parameter");
    check_unique(observables_, "observable");

    const std::size_t n = species_.size();
    const std::size_t q = parameters_.size();
    for (const auto& s : species_) {
        if (!(s.initial_value >= 0.0) || !std::isfinite(s.initial_value))
            throw ModelError("species '" + s.name + "' needs a finite initial value >= 0");
        if (!(s.threshold >= 0.0)) throw ModelError("species '" + s.name + "' threshold must be >= 0");
    }
    for (const auto& p : parameters_) {
        if (!std::isfinite(p.value)) throw ModelError("parameter '" + p.name + "' is not finite");
        if (!(p.threshold > 0.0)) throw ModelError("parameter '" + p.name + "' threshold must be > 0");
    }

    rate_factors_.resize(reactions_.size());
    net_stoich_.resize(reactions_.size());
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
        const Reaction& rx = reactions_[r];
        if (rx.rate_parameter >= q) throw ModelError("reaction '" + rx.name + "' references unknown parameter");
        for (std::size_t c : rx.rate_cofactors)
            if (c >= q) throw ModelError("reaction '" + rx.name + "' references unknown parameter");
        if (!std::isfinite(rx.rate_factor)) throw ModelError("reaction '" + rx.name + "' has non-finite factor");

        std::vector<double> net(n, 0.0);
        std::vector<double> exponent(n, 0.0);
        std::vector<bool> present(n, false);
        for (const auto& t : rx.reactants) {
            if (t.species >= n || t.coefficient < 1)
                throw ModelError("reaction '" + rx.name + "' has an invalid reactant");
            net[t.species] -= t.coefficient;
            exponent[t.species] += t.coefficient;
            present[t.species] = true;
        }
        for (const auto& t : rx.products) {
            if (t.species >= n || t.coefficient < 1)
                throw ModelError("reaction '" + rx.name + "' has an invalid product");
            net[t.species] += t.coefficient;
        }
        for (const auto& [s, e] : rx.exponent_overrides) {
            if (s >= n || !std::isfinite(e)) throw ModelError("reaction '" + rx.name + "' has an invalid exponent");
            exponent[s] = e;
            present[s] = true;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (present[i]) {
                const double e = exponent[i];
                const bool integral = e >= 0.0 && e <= 64.0 && std::floor(e) == e;
                rate_factors_[r].push_back({i, e, integral ? static_cast<int>(e) : 0, integral});
            }
            if (net[i] != 0.0) net_stoich_[r].emplace_back(i, net[i]);
        }
    }

    for (const auto& obs : observables_) {
        bool nonzero = false;
        for (const auto& [s, c] : obs.coefficients) {
            if (s >= n || !std::isfinite(c)) throw ModelError("observable '" + obs.name + "' is invalid");
            nonzero = nonzero || c != 0.0;
        }
        if (!nonzero) throw ModelError("observable '" + obs.name + "' has no nonzero coefficient");
    }

    for (std::size_t e = 0; e < events_.size(); ++e) {
        if (e > 0 && !(events_[e].time > events_[e - 1].time))
            throw ModelError("non-increasing event times");
        std::set<std::size_t> assigned;
        for (const auto& [s, expr] : events_[e].assignments) {
            if (s >= n) throw ModelError("event assigns unknown species");
            if (!assigned.insert(s).second)
                throw ModelError("event assigns species '" + species_[s].name + "' twice");
            for (const auto& [i, c] : expr.species_terms)
                if (i >= n) throw ModelError("event expression references unknown species");
            for (const auto& [k, c] : expr.parameter_terms)
                if (k >= q) throw ModelError("event expression references unknown parameter");
        }
    }
}

std::optional<std::size_t> KineticModel::find_species(std::string_view name) const {
    for (std::size_t i = 0; i < species_.size(); ++i)
        if (species_[i].name == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> KineticModel::find_parameter(std::string_view name) const {
    for (std::size_t i = 0; i < parameters_.size(); ++i)
        if (parameters_[i].name == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> KineticModel::find_observable(std::string_view name) const {
    for (std::size_t i = 0; i < observables_.size(); ++i)
        if (observables_[i].name == name) return i;
    return std::nullopt;
}

Vector KineticModel::initial_state() const {
    Vector y(species_.size());
    for (std::size_t i = 0; i < species_.size(); ++i) y[i] = species_[i].initial_value;
    return y;
}

Vector KineticModel::nominal_parameters() const {
    Vector p(parameters_.size());
    for (std::size_t i = 0; i < parameters_.size(); ++i) p[i] = parameters_[i].value;
    return p;
}

Vector KineticModel::parameter_thresholds() const {
    Vector t(parameters_.size());
    for (std::size_t i = 0; i < parameters_.size(); ++i) t[i] = parameters_[i].threshold;
    return t;
}

std::optional<Eigen::RowVectorXd> KineticModel::output_map(std::string_view name) const {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(species_.size());
    if (auto o = find_observable(name)) {
        for (const auto& [s, c] : observables_[*o].coefficients) row[s] += c;
        return row;
    }
    if (auto s = find_species(name)) {
        row[*s] = 1.0;
        return row;
    }
    return std::nullopt;
}

double KineticModel::output_threshold(const Eigen::RowVectorXd& map) const {
    double t = 0.0;
    for (std::size_t i = 0; i < species_.size(); ++i) t += std::abs(map[i]) * species_[i].threshold;
    return t;
}

double KineticModel::rate(std::size_t r, const Vector& y, const Vector& p) const {
    const Reaction& rx = reactions_[r];
    double v = rx.rate_factor * p[rx.rate_parameter];
    for (std::size_t c : rx.rate_cofactors) v *= p[c];
    for (const auto& f : rate_factors_[r]) v *= power(f, y[f.species]);
    return v;
}

void KineticModel::evaluate_rhs(const Vector& y, const Vector& p, Vector& dy) const {
    dy.setZero(species_.size());
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
        const double v = rate(r, y, p);
        if (!std::isfinite(v))
            throw EvaluationError("non-finite rate in reaction " + std::to_string(r) + " ('" +
                                      reactions_[r].name + "')",
                                  r);
        for (const auto& [i, s] : net_stoich_[r]) dy[i] += s * v;
    }
}

Vector KineticModel::evaluate_rhs(const Vector& y, const Vector& p) const {
    Vector dy;
    evaluate_rhs(y, p, dy);
    return dy;
}

void KineticModel::evaluate_rhs_jacobians(const Vector& y, const Vector& p, Matrix& fy, Matrix& fp) const {
    const std::size_t n = species_.size();
    fy.setZero(n, n);
    fp.setZero(n, parameters_.size());
    for (std::size_t r = 0; r < reactions_.size(); ++r) {
        const Reaction& rx = reactions_[r];
        const auto& factors = rate_factors_[r];
        double scale = rx.rate_factor * p[rx.rate_parameter];
        for (std::size_t c : rx.rate_cofactors) scale *= p[c];

        double prod = rx.rate_factor;
        for (const auto& f : factors) prod *= power(f, y[f.species]);
        if (!std::isfinite(prod))
            throw EvaluationError("non-finite rate in reaction " + std::to_string(r), r);
        // d(rate)/dp_j: drop one occurrence of p_j from the parameter product
        const std::size_t np = 1 + rx.rate_cofactors.size();
        auto param_at = [&](std::size_t a) { return a == 0 ? rx.rate_parameter : rx.rate_cofactors[a - 1]; };
        for (std::size_t a = 0; a < np; ++a) {
            double d = prod;
            for (std::size_t b = 0; b < np; ++b)
                if (b != a) d *= p[param_at(b)];
            for (const auto& [i, s] : net_stoich_[r]) fp(i, param_at(a)) += s * d;
        }

        for (std::size_t a = 0; a < factors.size(); ++a) {
            double d = scale * power_derivative(factors[a], y[factors[a].species]);
            for (std::size_t b = 0; b < factors.size(); ++b)
                if (b != a) d *= power(factors[b], y[factors[b].species]);
            if (!std::isfinite(d))
                throw EvaluationError("non-finite rate derivative in reaction " + std::to_string(r), r);
            for (const auto& [i, s] : net_stoich_[r]) fy(i, factors[a].species) += s * d;
        }
    }
}

std::pair<Matrix, Matrix> KineticModel::evaluate_rhs_jacobians(const Vector& y, const Vector& p) const {
    Matrix fy, fp;
    evaluate_rhs_jacobians(y, p, fy, fp);
    return {std::move(fy), std::move(fp)};
}

void KineticModel::apply_event(std::size_t index, const Vector& p, Vector& y) const {
    const Vector left = y;
    for (const auto& [s, expr] : events_.at(index).assignments) {
        double v = expr.constant;
        for (const auto& [i, c] : expr.species_terms) v += c * left[i];
        for (const auto& [k, c] : expr.parameter_terms) v += c * p[k];
        y[s] = v;
    }
}

std::pair<Matrix, Matrix> KineticModel::event_jacobians(std::size_t index) const {
    const std::size_t n = species_.size();
    Matrix gy = Matrix::Identity(n, n);
    Matrix gp = Matrix::Zero(n, parameters_.size());
    for (const auto& [s, expr] : events_.at(index).assignments) {
        gy.row(s).setZero();
        for (const auto& [i, c] : expr.species_terms) gy(s, i) += c;
        for (const auto& [k, c] : expr.parameter_terms) gp(s, k) += c;
    }
    return {std::move(gy), std::move(gp)};
}

KineticModel KineticModel::with_parameters(const Vector& values) const {
    if (static_cast<std::size_t>(values.size()) != parameters_.size())
        throw ModelError("parameter vector has wrong length");
    KineticModel copy = *this;
    for (std::size_t i = 0; i < parameters_.size(); ++i) copy.parameters_[i].value = values[i];
    return copy;
}

KineticModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_model(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    } catch (const ModelError& e) {
        throw ModelError(path + ": " + e.what());
    }
}

std::string format_parameters(const KineticModel& model, const Vector& values) {
    std::ostringstream os;
    os << "@parameters\n" << std::setprecision(17);
    for (std::size_t i = 0; i < model.parameter_count(); ++i) {
        const Parameter& par = model.parameters()[i];
        os << par.name << " = " << values[i] << " thres=" << par.threshold;
        if (!par.transform.is_identity()) os << " transform=" << par.transform.to_string();
        os << "\n";
    }
    return os.str();
}

}  // namespace kinfit
