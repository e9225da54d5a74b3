#pragma once

#include <cstddef>
#include <vector>

#include "kinfit/model.hpp"

namespace kinfit {

/// Householder QR with column pivoting, Q J P = [R; 0].
/// Householder vectors are stored below the diagonal of `factors`.
struct PivotedQR {
    Matrix factors;
    Vector betas;                     // reflector scalars, H = I - beta v v^T with v_0 = 1
    std::vector<Eigen::Index> perm;   // column j of R is column perm[j] of J
    Vector diag;                      // |r_11| >= |r_22| >= ... (length min(L, q))

    Eigen::Index rows() const noexcept { return factors.rows(); }
    Eigen::Index cols() const noexcept { return factors.cols(); }

    /// Upper-trapezoidal R (min(L,q) x q).
    Matrix R() const;
    /// Explicit orthogonal Q (L x L) with J P = Q [R; 0].
    Matrix Q() const;
    /// Permutation matrix P.
    Matrix P() const;
    /// Q^T v.
    Vector apply_qt(const Vector& v) const;
};

/// Columns are chosen by largest remaining norm (recomputed, not downdated);
/// among equal norms the lowest index wins. Throws DomainError on non-finite input.
PivotedQR qr_decompose(const Matrix& J);

/// Largest l with |r_ll| >= delta |r_11|; zero for the zero matrix.
std::size_t numerical_rank(const PivotedQR& qr, double delta);

/// |r_11| / |r_qq|; infinity when r_qq vanishes or L < q, 1 for an all-zero matrix.
double subcondition(const PivotedQR& qr);

/// delta * sc(J) >= 1 proves numerical rank deficiency.
bool certainly_rank_deficient(const PivotedQR& qr, double delta);

/// Minimum-norm minimiser of |J_l x + rhs| for the rank-l truncation, i.e.
/// x = -(J_l)^+ rhs, by complete orthogonal decomposition of the leading l rows of R.
Vector solve_min_norm(const PivotedQR& qr, const Vector& rhs, std::size_t rank);

/// (J_l^T J_l)^+ for the rank-l truncation.
Matrix truncated_gram_pinv(const PivotedQR& qr, std::size_t rank);

/// Orthonormal basis (columns) of the row space of the rank-l truncation.
Matrix truncated_row_space(const PivotedQR& qr, std::size_t rank);

/// Least-squares solver for J = [J_c; J_w] whose first `constraint_rows` rows
/// are equality constraints. Constraints are solved exactly (in the least-squares
/// sense when inconsistent); the weighted rows are minimised, minimum norm, over
/// the null space of the constraint block. Rank counts both parts.
class ConstrainedLeastSquares {
public:
    ConstrainedLeastSquares(const Matrix& J, std::size_t constraint_rows, double delta);

    /// Rank of the constraint block.
    std::size_t constraint_rank() const noexcept { return rc_; }
    /// Numerical rank of the full system at the threshold delta.
    std::size_t rank() const noexcept { return rc_ + lw_; }
    /// Smallest and largest admissible truncation ranks.
    std::size_t min_rank() const noexcept { return rc_; }
    std::size_t max_rank() const noexcept { return rc_ + weighted_.diag.size(); }

    /// Subcondition of the weighted block (after eliminating constraints).
    double subcondition() const;
    bool certainly_rank_deficient() const;

    /// -(J_l)^+ rhs with total rank l (min_rank() <= l <= max_rank()).
    Vector solve(const Vector& rhs, std::size_t rank) const;

    /// Orthonormal basis of the row space used by a rank-l solve.
    Matrix row_space(std::size_t rank) const;

private:
    std::size_t L_, q_, nc_;
    double delta_;
    std::size_t rc_ = 0, lw_ = 0;
    PivotedQR constraint_;
    Matrix Z1_, Z2_;   // row space / null space of the constraint block (original coordinates)
    Matrix T_;         // R_c^T = [Z1 Z2] [T; 0] in pivoted coordinates
    Matrix Jw_;
    PivotedQR weighted_;
};

}  // namespace kinfit
