// Line-oriented model format:
//
//   @species      A = 1.0 [thres=1e-3]
//   @parameters   k = 2.0 [thres=1e-6] [transform=exp|sin(A,B)|sqrtu(C)|sqrtl(C)]
//   @reactions    r1: A + 2 B -> C rate k [exp(B)=0.5]
//   @observables  Y = 2*A + B
//   @events       at t=1: A := A + 1; B := 0
//
// A section keyword may stand alone on a line (following lines belong to it) or
// prefix a single entry. '#' starts a comment.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "kinfit/error.hpp"
#include "kinfit/model.hpp"

namespace kinfit {

namespace {

enum class Section { none, species, parameters, reactions, observables, events };

struct Line {
    int number;
    std::string text;
};

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

bool is_identifier(const std::string& s) {
    if (s.empty() || !is_ident_start(s[0])) return false;
    for (char c : s)
        if (!is_ident_char(c)) return false;
    return true;
}

double parse_number(const std::string& s, int line) {
    const std::string t = trim(s);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
        throw ParseError("expected a number, got '" + t + "'", line);
    return v;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) out.push_back(trim(cur)), cur.clear();
        else cur += c;
    }
    out.push_back(trim(cur));
    return out;
}

// Removes optional-attribute brackets so "[thres=1]" and "thres=1" read alike.
std::string strip_brackets(std::string s) {
    for (char& c : s)
        if (c == '[' || c == ']') c = ' ';
    return s;
}

// "name = rest" -> (name, rest)
std::pair<std::string, std::string> split_assignment(const std::string& text, int line) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'name = value'", line);
    std::string name = trim(text.substr(0, eq));
    if (!is_identifier(name)) throw ParseError("invalid name '" + name + "'", line);
    return {name, trim(text.substr(eq + 1))};
}

Transform parse_transform(const std::string& spec, int line) {
    if (spec == "exp") return Transform::exponential();
    if (spec == "id" || spec == "identity" || spec == "none") return Transform::identity();
    const auto open = spec.find('(');
    if (open == std::string::npos || spec.back() != ')') throw ParseError("unknown transform '" + spec + "'", line);
    const std::string kind = spec.substr(0, open);
    const auto args = split_on(spec.substr(open + 1, spec.size() - open - 2), ',');
    try {
        if (kind == "sin" && args.size() == 2)
            return Transform::sinusoidal(parse_number(args[0], line), parse_number(args[1], line));
    } catch (const DomainError& e) {
        throw ParseError(e.what(), line);
    }
    if (kind == "sqrtu" && args.size() == 1) return Transform::root_square_upper(parse_number(args[0], line));
    if (kind == "sqrtl" && args.size() == 1) return Transform::root_square_lower(parse_number(args[0], line));
    throw ParseError("unknown transform '" + spec + "'", line);
}

class ModelParser {
public:
    explicit ModelParser(std::string_view text) { split_sections(text); }

    KineticModel build() {
        for (const auto& l : lines_[Section::species]) parse_species(l);
        for (const auto& l : lines_[Section::parameters]) parse_parameter(l);
        for (const auto& l : lines_[Section::reactions]) parse_reaction(l);
        for (const auto& l : lines_[Section::observables]) parse_observable(l);
        for (const auto& l : lines_[Section::events]) parse_event(l);
        return KineticModel(std::move(species_), std::move(parameters_), std::move(reactions_),
                            std::move(observables_), std::move(events_));
    }

private:
    void split_sections(std::string_view text) {
        Section current = Section::none;
        int number = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            auto nl = text.find('\n', pos);
            if (nl == std::string_view::npos) nl = text.size();
            std::string raw(text.substr(pos, nl - pos));
            pos = nl + 1;
            ++number;
            if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
            std::string line = trim(raw);
            if (line.empty()) continue;
            if (line[0] == '@') {
                std::size_t end = 1;
                while (end < line.size() && std::isalpha(static_cast<unsigned char>(line[end]))) ++end;
                const std::string key = line.substr(1, end - 1);
                if (key == "species") current = Section::species;
                else if (key == "parameters") current = Section::parameters;
                else if (key == "reactions") current = Section::reactions;
                else if (key == "observables") current = Section::observables;
                else if (key == "events") current = Section::events;
                else throw ParseError("unknown section '@" + key + "'", number);
                line = trim(line.substr(end));
                if (line.empty()) continue;
            }
            if (current == Section::none) throw ParseError("entry outside of any section", number);
            lines_[current].push_back({number, line});
        }
    }

    void parse_species(const Line& l) {
        auto [name, rest] = split_assignment(strip_brackets(l.text), l.number);
        auto tokens = split_ws(rest);
        if (tokens.empty()) throw ParseError("missing initial value for species '" + name + "'", l.number);
        Species s{name, parse_number(tokens[0], l.number), 0.0};
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            if (tokens[i].rfind("thres=", 0) == 0) s.threshold = parse_number(tokens[i].substr(6), l.number);
            else throw ParseError("unexpected '" + tokens[i] + "'", l.number);
        }
        if (s.initial_value < 0.0) throw ParseError("species '" + name + "' has negative initial value", l.number);
        if (s.threshold < 0.0) throw ParseError("negative threshold", l.number);
        declare(name, l.number);
        species_index_[name] = species_.size();
        species_.push_back(std::move(s));
    }

    void parse_parameter(const Line& l) {
        auto [name, rest] = split_assignment(strip_brackets(l.text), l.number);
        // '=' inside attributes was consumed by split_assignment only once; re-split the rest.
        auto tokens = split_ws(rest);
        if (tokens.empty()) throw ParseError("missing value for parameter '" + name + "'", l.number);
        Parameter p{name, parse_number(tokens[0], l.number), 1e-6, Transform::identity()};
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            if (tokens[i].rfind("thres=", 0) == 0) p.threshold = parse_number(tokens[i].substr(6), l.number);
            else if (tokens[i].rfind("transform=", 0) == 0) p.transform = parse_transform(tokens[i].substr(10), l.number);
            else throw ParseError("unexpected '" + tokens[i] + "'", l.number);
        }
        if (!(p.threshold > 0.0)) throw ParseError("parameter threshold must be > 0", l.number);
        try {
            (void)transform_backward(p.transform, p.value);
        } catch (const DomainError& e) {
            throw ParseError("parameter '" + name + "': " + e.what(), l.number);
        }
        declare(name, l.number);
        parameter_index_[name] = parameters_.size();
        parameters_.push_back(std::move(p));
    }

    void declare(const std::string& name, int line) {
        if (!names_.emplace(name, line).second)
            throw ParseError("duplicate name '" + name + "'", line);
    }

    std::size_t species_ref(const std::string& name, int line) const {
        auto it = species_index_.find(name);
        if (it == species_index_.end()) throw ParseError("unknown species '" + name + "'", line);
        return it->second;
    }

    std::size_t parameter_ref(const std::string& name, int line) const {
        auto it = parameter_index_.find(name);
        if (it == parameter_index_.end()) throw ParseError("unknown parameter '" + name + "'", line);
        return it->second;
    }

    std::vector<StoichTerm> parse_side(const std::string& side, int line) const {
        std::vector<StoichTerm> terms;
        const std::string s = trim(side);
        if (s.empty() || s == "0" || s == "∅" || s == "{}") return terms;
        for (const auto& part : split_on(s, '+')) {
            std::string t = part;
            for (char& c : t)
                if (c == '*') c = ' ';
            auto tok = split_ws(t);
            int coef = 1;
            std::string name;
            if (tok.size() == 1) {
                name = tok[0];
                // "2A" shorthand
                std::size_t d = 0;
                while (d < name.size() && std::isdigit(static_cast<unsigned char>(name[d]))) ++d;
                if (d > 0 && d < name.size()) {
                    coef = std::stoi(name.substr(0, d));
                    name = name.substr(d);
                }
            } else if (tok.size() == 2) {
                const double c = parse_number(tok[0], line);
                if (c < 1.0 || std::floor(c) != c) throw ParseError("stoichiometry must be a positive integer", line);
                coef = static_cast<int>(c);
                name = tok[1];
            } else {
                throw ParseError("cannot read reaction term '" + part + "'", line);
            }
            terms.push_back({species_ref(name, line), coef});
        }
        return terms;
    }

    void parse_reaction(const Line& l) {
        std::string text = strip_brackets(l.text);
        Reaction rx;
        const auto arrow = text.find("->");
        if (arrow == std::string::npos) throw ParseError("reaction needs '->'", l.number);
        const auto colon = text.find(':');
        std::size_t lhs_begin = 0;
        if (colon != std::string::npos && colon < arrow) {
            rx.name = trim(text.substr(0, colon));
            if (!is_identifier(rx.name)) throw ParseError("invalid reaction name '" + rx.name + "'", l.number);
            lhs_begin = colon + 1;
        } else {
            rx.name = "R" + std::to_string(reactions_.size() + 1);
        }
        rx.reactants = parse_side(text.substr(lhs_begin, arrow - lhs_begin), l.number);

        std::string rhs = text.substr(arrow + 2);
        auto tokens = split_ws(rhs);
        std::size_t rate_pos = tokens.size();
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] == "rate") {
                rate_pos = i;
                break;
            }
        if (rate_pos + 1 >= tokens.size()) throw ParseError("reaction needs 'rate <parameter>'", l.number);
        std::string products;
        for (std::size_t i = 0; i < rate_pos; ++i) products += tokens[i] + " ";
        rx.products = parse_side(products, l.number);

        // rate k | rate c*k | rate k1*k2*c
        const auto factors = split_on(tokens[rate_pos + 1], '*');
        bool have_param = false;
        for (const auto& f : factors) {
            if (is_identifier(f)) {
                if (have_param) rx.rate_cofactors.push_back(parameter_ref(f, l.number));
                else rx.rate_parameter = parameter_ref(f, l.number);
                have_param = true;
            } else {
                rx.rate_factor *= parse_number(f, l.number);
            }
        }
        if (!have_param) throw ParseError("rate must reference a parameter", l.number);

        for (std::size_t i = rate_pos + 2; i < tokens.size(); ++i) {
            const std::string& a = tokens[i];
            if (a.rfind("exp(", 0) != 0) throw ParseError("unexpected '" + a + "'", l.number);
            const auto close = a.find(")=");
            if (close == std::string::npos) throw ParseError("expected exp(Species)=value", l.number);
            rx.exponent_overrides.emplace_back(species_ref(a.substr(4, close - 4), l.number),
                                               parse_number(a.substr(close + 2), l.number));
        }
        reactions_.push_back(std::move(rx));
    }

    // Terms of a linear/affine combination: [sign] [number '*'] symbol | number | symbol '*' number
    template <class OnSymbol>
    double parse_linear(const std::string& expr, int line, OnSymbol on_symbol) const {
        std::vector<std::pair<double, std::string>> terms;
        std::string cur;
        double sign = 1.0;
        auto flush = [&](double next_sign) {
            const std::string t = trim(cur);
            if (t.empty()) {
                // leading sign or "a + -b": fold sign
                sign *= next_sign;
                return;
            }
            terms.emplace_back(sign, t);
            cur.clear();
            sign = next_sign;
        };
        for (std::size_t i = 0; i < expr.size(); ++i) {
            const char c = expr[i];
            // do not split exponent signs like 1e-3
            const bool exp_sign = (c == '+' || c == '-') && i > 0 && (expr[i - 1] == 'e' || expr[i - 1] == 'E') &&
                                  i > 1 && (std::isdigit(static_cast<unsigned char>(expr[i - 2])) || expr[i - 2] == '.');
            if ((c == '+' || c == '-') && !exp_sign) {
                flush(c == '-' ? -1.0 : 1.0);
            } else {
                cur += c;
            }
        }
        flush(1.0);
        if (terms.empty()) throw ParseError("empty expression", line);

        double constant = 0.0;
        for (const auto& [s, t] : terms) {
            double coef = s;
            std::string symbol;
            for (const auto& f : split_on(t, '*')) {
                if (is_identifier(f)) {
                    if (!symbol.empty()) throw ParseError("expression is not affine: '" + t + "'", line);
                    symbol = f;
                } else {
                    coef *= parse_number(f, line);
                }
            }
            if (symbol.empty()) constant += coef;
            else on_symbol(symbol, coef);
        }
        return constant;
    }

    void parse_observable(const Line& l) {
        auto [name, rest] = split_assignment(l.text, l.number);
        Observable obs{name, {}};
        const double c = parse_linear(rest, l.number, [&](const std::string& sym, double coef) {
            obs.coefficients.emplace_back(species_ref(sym, l.number), coef);
        });
        if (c != 0.0) throw ParseError("observable must be linear (no constant term)", l.number);
        bool nonzero = false;
        for (const auto& [s, v] : obs.coefficients) nonzero = nonzero || v != 0.0;
        if (!nonzero) throw ParseError("observable '" + name + "' has no nonzero coefficient", l.number);
        declare(name, l.number);
        observables_.push_back(std::move(obs));
    }

    void parse_event(const Line& l) {
        // at t=1.5: A := A + 1; B := k
        const std::string& text = l.text;
        if (text.rfind("at", 0) != 0) throw ParseError("event must start with 'at t=<time>:'", l.number);
        const auto colon = text.find(':');
        if (colon == std::string::npos) throw ParseError("event needs ':' after the trigger", l.number);
        std::string trig = trim(text.substr(2, colon - 2));
        if (trig.rfind("t", 0) != 0) throw ParseError("event trigger must be 't=<time>'", l.number);
        trig = trim(trig.substr(1));
        if (trig.empty() || trig[0] != '=') throw ParseError("event trigger must be 't=<time>'", l.number);
        BreakpointEvent ev;
        ev.time = parse_number(trig.substr(1), l.number);
        if (!events_.empty() && !(ev.time > events_.back().time))
            throw ParseError("non-increasing event times", l.number);

        for (const auto& stmt : split_on(text.substr(colon + 1), ';')) {
            if (stmt.empty()) continue;
            const auto assign = stmt.find(":=");
            if (assign == std::string::npos) throw ParseError("expected 'Species := expression'", l.number);
            const std::size_t target = species_ref(trim(stmt.substr(0, assign)), l.number);
            for (const auto& [s, e] : ev.assignments)
                if (s == target) throw ParseError("species assigned twice in one event", l.number);
            AffineExpr expr;
            expr.constant = parse_linear(stmt.substr(assign + 2), l.number, [&](const std::string& sym, double coef) {
                if (auto it = species_index_.find(sym); it != species_index_.end())
                    expr.species_terms.emplace_back(it->second, coef);
                else if (auto jt = parameter_index_.find(sym); jt != parameter_index_.end())
                    expr.parameter_terms.emplace_back(jt->second, coef);
                else
                    throw ParseError("unknown name '" + sym + "' in event", l.number);
            });
            ev.assignments.emplace_back(target, std::move(expr));
        }
        if (ev.assignments.empty()) throw ParseError("event without assignments", l.number);
        events_.push_back(std::move(ev));
    }

    std::map<Section, std::vector<Line>> lines_;
    std::map<std::string, int> names_;
    std::map<std::string, std::size_t> species_index_;
    std::map<std::string, std::size_t> parameter_index_;

    std::vector<Species> species_;
    std::vector<Parameter> parameters_;
    std::vector<Reaction> reactions_;
    std::vector<Observable> observables_;
    std::vector<BreakpointEvent> events_;
};

}  // namespace

KineticModel parse_model(std::string_view text) {
    return ModelParser(text).build();
}

}  // namespace kinfit
