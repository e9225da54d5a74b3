#include "kinfit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kinfit/error.hpp"

namespace kinfit {

namespace {

struct Cod {
    Matrix Z;  // q x q orthogonal, pivoted coordinates
    Matrix T;  // l x l upper triangular with R_l^T = Z [T; 0]
};

Cod orthogonal_complement(const PivotedQR& qr, std::size_t rank) {
    const auto l = static_cast<Eigen::Index>(rank);
    const Eigen::Index q = qr.cols();
    Cod out;
    const Matrix Rt = qr.R().topRows(l).transpose();
    Eigen::HouseholderQR<Matrix> h(Rt);
    out.Z = h.householderQ() * Matrix::Identity(q, q);
    out.T = h.matrixQR().topLeftCorner(l, l).triangularView<Eigen::Upper>();
    return out;
}

Matrix unpermute_rows(const PivotedQR& qr, const Matrix& M) {
    Matrix out(M.rows(), M.cols());
    for (Eigen::Index j = 0; j < M.rows(); ++j) out.row(qr.perm[static_cast<std::size_t>(j)]) = M.row(j);
    return out;
}

}  // namespace

Matrix PivotedQR::R() const {
    const Eigen::Index m = std::min(rows(), cols());
    Matrix r = factors.topRows(m).triangularView<Eigen::Upper>();
    return r;
}

Vector PivotedQR::apply_qt(const Vector& v) const {
    Vector w = v;
    const Eigen::Index L = rows();
    for (Eigen::Index k = 0; k < betas.size(); ++k) {
        if (betas[k] == 0.0) continue;
        Vector h(L - k);
        h[0] = 1.0;
        h.tail(L - k - 1) = factors.col(k).tail(L - k - 1);
        const double s = betas[k] * h.dot(w.tail(L - k));
        w.tail(L - k) -= s * h;
    }
    return w;
}

Matrix PivotedQR::Q() const {
    const Eigen::Index L = rows();
    Matrix Qm = Matrix::Identity(L, L);
    for (Eigen::Index k = betas.size() - 1; k >= 0; --k) {
        if (betas[k] == 0.0) continue;
        Vector h(L - k);
        h[0] = 1.0;
        h.tail(L - k - 1) = factors.col(k).tail(L - k - 1);
        auto block = Qm.bottomRows(L - k);
        const Eigen::RowVectorXd s = betas[k] * (h.transpose() * block);
        block -= h * s;
    }
    return Qm;
}

Matrix PivotedQR::P() const {
    Matrix p = Matrix::Zero(cols(), cols());
    for (std::size_t j = 0; j < perm.size(); ++j) p(perm[j], static_cast<Eigen::Index>(j)) = 1.0;
    return p;
}

PivotedQR qr_decompose(const Matrix& J) {
    if (!J.allFinite()) throw DomainError("matrix has non-finite entries");
    PivotedQR qr;
    qr.factors = J;
    const Eigen::Index L = J.rows(), q = J.cols();
    const Eigen::Index m = std::min(L, q);
    qr.betas = Vector::Zero(m);
    qr.diag = Vector::Zero(m);
    qr.perm.resize(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) qr.perm[static_cast<std::size_t>(j)] = j;

    Matrix& A = qr.factors;
    for (Eigen::Index k = 0; k < m; ++k) {
        Eigen::Index best = k;
        double best_norm = -1.0;
        for (Eigen::Index j = k; j < q; ++j) {
            const double nj = A.col(j).tail(L - k).norm();
            if (nj > best_norm) best_norm = nj, best = j;
        }
        if (best != k) {
            A.col(k).swap(A.col(best));
            std::swap(qr.perm[static_cast<std::size_t>(k)], qr.perm[static_cast<std::size_t>(best)]);
        }
        const double x0 = A(k, k);
        const double norm = best_norm;
        if (norm == 0.0) continue;
        const double alpha = x0 >= 0.0 ? -norm : norm;
        const double v0 = x0 - alpha;
        A.col(k).tail(L - k - 1) /= v0;
        Vector h(L - k);
        h[0] = 1.0;
        h.tail(L - k - 1) = A.col(k).tail(L - k - 1);
        const double beta = 2.0 / h.squaredNorm();
        qr.betas[k] = beta;
        if (k + 1 < q) {
            auto block = A.bottomRightCorner(L - k, q - k - 1);
            const Eigen::RowVectorXd s = beta * (h.transpose() * block);
            block -= h * s;
        }
        A(k, k) = alpha;
        qr.diag[k] = std::abs(alpha);
    }
    return qr;
}

std::size_t numerical_rank(const PivotedQR& qr, double delta) {
    if (qr.diag.size() == 0 || qr.diag[0] == 0.0) return 0;
    std::size_t l = 0;
    while (static_cast<Eigen::Index>(l) < qr.diag.size() && qr.diag[static_cast<Eigen::Index>(l)] >= delta * qr.diag[0])
        ++l;
    return l;
}

double subcondition(const PivotedQR& qr) {
    if (qr.diag.size() == 0 || qr.diag[0] == 0.0) return 1.0;
    if (qr.rows() < qr.cols()) return std::numeric_limits<double>::infinity();
    const double last = qr.diag[qr.diag.size() - 1];
    if (last == 0.0) return std::numeric_limits<double>::infinity();
    return qr.diag[0] / last;
}

bool certainly_rank_deficient(const PivotedQR& qr, double delta) {
    return delta * subcondition(qr) >= 1.0;
}

Vector solve_min_norm(const PivotedQR& qr, const Vector& rhs, std::size_t rank) {
    const Eigen::Index q = qr.cols();
    if (rhs.size() != qr.rows()) throw DomainError("right-hand side has wrong length");
    if (static_cast<Eigen::Index>(rank) > qr.diag.size()) throw DomainError("rank exceeds min(L, q)");
    Vector x = Vector::Zero(q);
    if (rank == 0) return x;
    const auto l = static_cast<Eigen::Index>(rank);
    const Vector c = qr.apply_qt(-rhs).head(l);
    const Cod cod = orthogonal_complement(qr, rank);
    const Vector w = cod.T.transpose().triangularView<Eigen::Lower>().solve(c);
    const Vector y = cod.Z.leftCols(l) * w;
    for (Eigen::Index j = 0; j < q; ++j) x[qr.perm[static_cast<std::size_t>(j)]] = y[j];
    return x;
}

Matrix truncated_gram_pinv(const PivotedQR& qr, std::size_t rank) {
    const Eigen::Index q = qr.cols();
    if (rank == 0) return Matrix::Zero(q, q);
    const auto l = static_cast<Eigen::Index>(rank);
    const Cod cod = orthogonal_complement(qr, rank);
    // B = Z_l T^{-T}, computed as (T^{-1} Z_l^T)^T
    const Matrix Bt = cod.T.triangularView<Eigen::Upper>().solve(Matrix(cod.Z.leftCols(l).transpose()));
    const Matrix B = unpermute_rows(qr, Bt.transpose());
    return B * B.transpose();
}

Matrix truncated_row_space(const PivotedQR& qr, std::size_t rank) {
    if (rank == 0) return Matrix::Zero(qr.cols(), 0);
    const Cod cod = orthogonal_complement(qr, rank);
    return unpermute_rows(qr, cod.Z.leftCols(static_cast<Eigen::Index>(rank)));
}

ConstrainedLeastSquares::ConstrainedLeastSquares(const Matrix& J, std::size_t constraint_rows, double delta)
    : L_(static_cast<std::size_t>(J.rows())), q_(static_cast<std::size_t>(J.cols())), nc_(constraint_rows),
      delta_(delta) {
    if (nc_ > L_) throw DomainError("more constraint rows than rows");
    const auto q = static_cast<Eigen::Index>(q_);
    const auto nc = static_cast<Eigen::Index>(nc_);
    Jw_ = J.bottomRows(J.rows() - nc);
    if (nc_ == 0) {
        Z1_ = Matrix::Zero(q, 0);
        Z2_ = Matrix::Identity(q, q);
        weighted_ = qr_decompose(Jw_);
    } else {
        constraint_ = qr_decompose(J.topRows(nc));
        rc_ = numerical_rank(constraint_, delta_);
        const Cod cod = orthogonal_complement(constraint_, rc_);
        const auto r = static_cast<Eigen::Index>(rc_);
        const Matrix Z = unpermute_rows(constraint_, cod.Z);
        Z1_ = Z.leftCols(r);
        Z2_ = Z.rightCols(q - r);
        T_ = cod.T;
        weighted_ = qr_decompose(Jw_ * Z2_);
    }
    lw_ = numerical_rank(weighted_, delta_);
}

double ConstrainedLeastSquares::subcondition() const { return kinfit::subcondition(weighted_); }

bool ConstrainedLeastSquares::certainly_rank_deficient() const {
    return kinfit::certainly_rank_deficient(weighted_, delta_);
}

Vector ConstrainedLeastSquares::solve(const Vector& rhs, std::size_t rank) const {
    if (static_cast<std::size_t>(rhs.size()) != L_) throw DomainError("right-hand side has wrong length");
    if (rank < min_rank() || rank > max_rank()) throw DomainError("requested rank out of range");
    const auto nc = static_cast<Eigen::Index>(nc_);
    Vector x = Vector::Zero(static_cast<Eigen::Index>(q_));
    Vector rhs_w = rhs.tail(rhs.size() - nc);
    if (rc_ > 0) {
        const Vector c = constraint_.apply_qt(-rhs.head(nc)).head(static_cast<Eigen::Index>(rc_));
        const Vector w1 = T_.transpose().triangularView<Eigen::Lower>().solve(c);
        x = Z1_ * w1;
        rhs_w += Jw_ * x;
    }
    if (rank > rc_) x += Z2_ * solve_min_norm(weighted_, rhs_w, rank - rc_);
    return x;
}

Matrix ConstrainedLeastSquares::row_space(std::size_t rank) const {
    const Matrix W = truncated_row_space(weighted_, rank - rc_);
    Matrix out(static_cast<Eigen::Index>(q_), Z1_.cols() + W.cols());
    out << Z1_, Z2_ * W;
    return out;
}

}  // namespace kinfit
