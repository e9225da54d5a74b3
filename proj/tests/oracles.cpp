#include "oracles.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace oracle {

Vector rk4(const Rhs& f, double t0, const Vector& y0, double t1, double h) {
    Vector y = y0;
    double t = t0;
    const auto steps = static_cast<long>(std::ceil((t1 - t0) / h - 1e-9));
    for (long i = 0; i < steps; ++i) {
        const double hh = (i + 1 == steps) ? t1 - t : h;
        const Vector k1 = f(t, y);
        const Vector k2 = f(t + hh / 2, y + hh / 2 * k1);
        const Vector k3 = f(t + hh / 2, y + hh / 2 * k2);
        const Vector k4 = f(t + hh, y + hh * k3);
        y += hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        t = (i + 1 == steps) ? t1 : t0 + static_cast<double>(i + 1) * h;
    }
    return y;
}

Matrix central_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
    const Vector f0 = f(x);
    Matrix J(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-6 * std::max(std::abs(x[j]), 1.0);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (f(xp) - f(xm)) / (xp[j] - xm[j]);
    }
    return J;
}

kinfit::KineticModel random_network(std::uint64_t seed, std::size_t n, std::size_t q, std::size_t reactions) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> value(0.1, 2.0);
    std::uniform_int_distribution<std::size_t> species(0, n - 1), param(0, q - 1), count(0, 2), coef(1, 2);
    std::bernoulli_distribution coin(0.25);

    std::vector<kinfit::Species> sp;
    for (std::size_t i = 0; i < n; ++i) sp.push_back({"S" + std::to_string(i), value(rng), 1e-6});
    std::vector<kinfit::Parameter> ps;
    for (std::size_t j = 0; j < q; ++j) ps.push_back({"k" + std::to_string(j), value(rng), 1e-6, {}});
    std::vector<kinfit::Reaction> rs;
    for (std::size_t r = 0; r < reactions; ++r) {
        kinfit::Reaction rx;
        rx.name = "R" + std::to_string(r);
        rx.rate_parameter = r < q ? r : param(rng);
        const std::size_t nr = 1 + count(rng) % 2, np = count(rng);
        for (std::size_t a = 0; a < nr; ++a) rx.reactants.push_back({species(rng), static_cast<int>(coef(rng))});
        for (std::size_t a = 0; a < np; ++a) rx.products.push_back({species(rng), static_cast<int>(coef(rng))});
        if (coin(rng)) rx.exponent_overrides.emplace_back(rx.reactants.front().species, 0.5 + value(rng));
        if (coin(rng)) rx.rate_factor = value(rng);
        rs.push_back(std::move(rx));
    }
    return kinfit::KineticModel(std::move(sp), std::move(ps), std::move(rs), {}, {});
}

double golden_minimise(const std::function<double(double)>& f, double a, double b, double tol) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d, d = c, fd = fc;
            c = b - g * (b - a), fc = f(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + g * (b - a), fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

Vector svd_min_norm(const Matrix& J, const Vector& rhs, std::size_t rank) {
    Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector x = Vector::Zero(J.cols());
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rank); ++i)
        x -= svd.matrixV().col(i) * (svd.matrixU().col(i).dot(rhs) / svd.singularValues()[i]);
    return x;
}

double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace oracle
