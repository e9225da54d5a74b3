#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "kinfit/kinfit.hpp"
#include "oracles.hpp"

using namespace kinfit;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Matrix A(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) A(i, j) = g(rng);
    return A;
}

}  // namespace

TEST_CASE("QR of the identity") {
    const auto qr = qr_decompose(Matrix::Identity(3, 3));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(qr.diag[i] == doctest::Approx(1.0));
    CHECK(numerical_rank(qr, 1e-4) == 3);
    CHECK(subcondition(qr) == doctest::Approx(1.0));
    CHECK_FALSE(certainly_rank_deficient(qr, 1e-4));
}

TEST_CASE("equal columns give a negligible second diagonal") {
    Matrix J(3, 2);
    J << 1, 1, 2, 2, 3, 3;
    const auto qr = qr_decompose(J);
    CHECK(qr.diag[1] <= 1e-14 * qr.diag[0]);
    CHECK(numerical_rank(qr, 1e-4) == 1);
    CHECK(std::isinf(subcondition(qr)));
}

TEST_CASE("pivoted QR reconstructs the matrix") {
    const Matrix J = random_matrix(10, 4, 7);
    const auto qr = qr_decompose(J);
    Matrix R = Matrix::Zero(10, 4);
    R.topRows(4) = qr.R();
    CHECK((qr.Q() * R - J * qr.P()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((qr.Q().transpose() * qr.Q() - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff() <= 1e-12);
    for (Eigen::Index i = 1; i < 4; ++i) CHECK(qr.diag[i] <= qr.diag[i - 1]);
    const Vector v = Vector::LinSpaced(10, -1, 1);
    CHECK((qr.apply_qt(v) - qr.Q().transpose() * v).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ties pick the lowest column") {
    const auto qr = qr_decompose(Matrix::Identity(3, 3));
    CHECK(qr.perm == std::vector<Eigen::Index>{0, 1, 2});
}

TEST_CASE("non-finite input is rejected") {
    Matrix J = Matrix::Identity(2, 2);
    J(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(qr_decompose(J), DomainError);
}

TEST_CASE("numerical rank examples") {
    Matrix D = Matrix::Zero(3, 3);
    D.diagonal() << 1.0, 1e-3, 1e-6;
    CHECK(numerical_rank(qr_decompose(D), 1e-4) == 2);
    CHECK(numerical_rank(qr_decompose(D), 1e-7) == 3);
    CHECK(numerical_rank(qr_decompose(Matrix::Zero(3, 2)), 1e-4) == 0);
    CHECK(subcondition(qr_decompose(Matrix::Zero(3, 2))) == 1.0);
    CHECK(subcondition(qr_decompose(D)) == doctest::Approx(1e6));
    CHECK(certainly_rank_deficient(qr_decompose(D), 1e-4));
    CHECK_FALSE(certainly_rank_deficient(qr_decompose(D), 1e-7));
    // More columns than rows.
    CHECK(std::isinf(subcondition(qr_decompose(Matrix::Ones(1, 2)))));
}

TEST_CASE("minimum norm solutions by hand") {
    Matrix J(1, 2);
    J << 1, 1;
    Vector F(1);
    F << -2;
    const Vector x = solve_min_norm(qr_decompose(J), F, 1);
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(1.0));

    const Vector b = Vector::LinSpaced(3, 1, 3);
    CHECK((solve_min_norm(qr_decompose(Matrix::Identity(3, 3)), b, 3) + b).norm() <= 1e-15);

    Matrix D = Matrix::Zero(2, 2);
    D.diagonal() << 1.0, 1e-9;
    const Vector y = solve_min_norm(qr_decompose(D), Vector::Ones(2), 1);
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == 0.0);
}

TEST_CASE("minimum norm solution agrees with a truncated SVD") {
    // Rank-3 matrix with a well separated spectrum.
    const Matrix J = random_matrix(12, 3, 3) * random_matrix(3, 5, 4);
    const Vector F = random_matrix(12, 1, 5).col(0);
    const auto qr = qr_decompose(J);
    REQUIRE(numerical_rank(qr, 1e-8) == 3);
    const Vector a = solve_min_norm(qr, F, 3);
    const Vector b = oracle::svd_min_norm(J, F, 3);
    CHECK((a - b).norm() <= 1e-10 * b.norm());
    // The solution lies in the row space.
    const Matrix Vr = truncated_row_space(qr, 3);
    CHECK((a - Vr * (Vr.transpose() * a)).norm() <= 1e-10 * a.norm());
}

TEST_CASE("truncated Gram pseudo-inverse") {
    const Matrix J = random_matrix(8, 3, 11);
    const Matrix G = truncated_gram_pinv(qr_decompose(J), 3);
    CHECK((G - (J.transpose() * J).inverse()).cwiseAbs().maxCoeff() <= 1e-10);
    Matrix K(3, 2);
    K << 1, 1, 2, 2, 3, 3;
    const Matrix H = truncated_gram_pinv(qr_decompose(K), 1);
    // (K^T K)^+ for K = v [1 1]: [1 1; 1 1] / (4 |v|^2)
    CHECK(H(0, 1) == doctest::Approx(1.0 / 56.0));
    CHECK(H(0, 0) == doctest::Approx(1.0 / 56.0));
}

TEST_CASE("constrained least squares satisfies the constraints") {
    const Matrix J = random_matrix(10, 4, 21);
    const Vector F = random_matrix(10, 1, 22).col(0);
    const ConstrainedLeastSquares ls(J, 2, 1e-8);
    CHECK(ls.constraint_rank() == 2);
    CHECK(ls.rank() == 4);
    const Vector x = ls.solve(F, 4);
    CHECK((J.topRows(2) * x + F.head(2)).norm() <= 1e-12);
    // Reference: minimise the weighted rows over the affine constraint set via the KKT system.
    Matrix K = Matrix::Zero(6, 6);
    K.topLeftCorner(4, 4) = J.bottomRows(8).transpose() * J.bottomRows(8);
    K.topRightCorner(4, 2) = J.topRows(2).transpose();
    K.bottomLeftCorner(2, 4) = J.topRows(2);
    Vector r(6);
    r.head(4) = -J.bottomRows(8).transpose() * F.tail(8);
    r.tail(2) = -F.head(2);
    const Vector kkt = K.fullPivLu().solve(r);
    CHECK((x - kkt.head(4)).norm() <= 1e-10);
}

TEST_CASE("constrained solver without constraints is the plain minimum norm solve") {
    const Matrix J = random_matrix(9, 4, 31);
    const Vector F = random_matrix(9, 1, 32).col(0);
    const ConstrainedLeastSquares ls(J, 0, 1e-4);
    CHECK(ls.min_rank() == 0);
    CHECK(ls.max_rank() == 4);
    for (std::size_t l = 1; l <= 4; ++l)
        CHECK((ls.solve(F, l) - solve_min_norm(qr_decompose(J), F, l)).norm() <= 1e-12);
    CHECK(ls.subcondition() == doctest::Approx(subcondition(qr_decompose(J))));
}
