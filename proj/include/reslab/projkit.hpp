#pragma once

// Dense rank-revealing utilities: orthogonal projectors, pseudoinverse,
// Kronecker product and column-major vectorization.
//
// Every rank decision goes through one cutoff rule: singular values strictly
// above `tol` count, with the default tol = max(rows, cols) * eps * sigma_max.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "reslab/errors.hpp"

namespace reslab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entry");
}

inline void require_rows_match(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows())
        throw ShapeError(std::string(what) + ": row counts differ (" + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()) + ")");
}

/// Orthogonal projector onto a column space, with the rank it was built from.
struct Projector {
    Matrix matrix;
    Index source_rank = 0;
    double tolerance = 0.0;
};

namespace detail {

struct ThinSvd {
    Matrix u;
    Vector s;
    Matrix v;
};

inline ThinSvd thin_svd(const Matrix& m, bool want_v) {
    ThinSvd out;
    if (m.rows() == 0 || m.cols() == 0) {
        out.u = Matrix(m.rows(), 0);
        out.v = Matrix(m.cols(), 0);
        out.s = Vector(0);
        return out;
    }
    const unsigned opts = want_v ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : Eigen::ComputeThinU;
    Eigen::BDCSVD<Matrix> svd(m, opts);
    out.u = svd.matrixU();
    out.s = svd.singularValues();
    if (want_v) out.v = svd.matrixV();
    return out;
}

inline double resolve_tol(const Matrix& m, const Vector& s, std::optional<double> rank_tol) {
    if (rank_tol) {
        if (!(*rank_tol > 0.0)) throw InvalidInput("rank tolerance must be positive");
        return *rank_tol;
    }
    const double smax = s.size() ? s(0) : 0.0;
    return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() * smax;
}

inline Index count_above(const Vector& s, double tol) {
    Index r = 0;
    while (r < s.size() && s(r) > tol) ++r;
    return r;
}

}  // namespace detail

/// Numerical rank under the shared cutoff rule.
inline Index numerical_rank(const Matrix& m, std::optional<double> rank_tol = std::nullopt) {
    require_finite(m, "numerical_rank");
    const auto svd = detail::thin_svd(m, false);
    return detail::count_above(svd.s, detail::resolve_tol(m, svd.s, rank_tol));
}

/// P[M]: orthogonal projector onto col(M), built as U_r U_r^T.
/// A matrix with zero columns yields the zero projector.
inline Projector col_projector(const Matrix& m, std::optional<double> rank_tol = std::nullopt) {
    require_finite(m, "col_projector");
    const auto svd = detail::thin_svd(m, false);
    const double tol = detail::resolve_tol(m, svd.s, rank_tol);
    const Index r = detail::count_above(svd.s, tol);
    const auto ur = svd.u.leftCols(r);
    Matrix p = ur * ur.transpose();
    // exact symmetry; the product is symmetric only up to rounding
    p = 0.5 * (p + p.transpose()).eval();
    return {std::move(p), r, tol};
}

/// P_N[M] = I - P[M]: projector onto the null space of M^T.
inline Projector null_projector(const Matrix& m, std::optional<double> rank_tol = std::nullopt) {
    Projector p = col_projector(m, rank_tol);
    p.matrix = Matrix::Identity(m.rows(), m.rows()) - p.matrix;
    return p;
}

/// Moore-Penrose pseudoinverse V_r S_r^{-1} U_r^T.
inline Matrix pinv(const Matrix& m, std::optional<double> rank_tol = std::nullopt) {
    require_finite(m, "pinv");
    const auto svd = detail::thin_svd(m, true);
    const double tol = detail::resolve_tol(m, svd.s, rank_tol);
    const Index r = detail::count_above(svd.s, tol);
    const Vector inv = svd.s.head(r).cwiseInverse();
    return svd.v.leftCols(r) * inv.asDiagonal() * svd.u.leftCols(r).transpose();
}

/// Orthonormal basis of Null(M) (right null space), as columns.
inline Matrix null_space_basis(const Matrix& m, std::optional<double> rank_tol = std::nullopt) {
    require_finite(m, "null_space_basis");
    if (m.rows() == 0 || m.cols() == 0) return Matrix::Identity(m.cols(), m.cols());
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
    const Vector s = svd.singularValues();
    const double tol = detail::resolve_tol(m, s, rank_tol);
    const Index r = detail::count_above(s, tol);
    return svd.matrixV().rightCols(m.cols() - r);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    require_finite(a, "kron");
    require_finite(b, "kron");
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Column-major stacking: [M11, M21, ..., Md1, M12, ...]^T.
inline Vector vec(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

/// Inverse of vec for a rows x cols target.
inline Matrix unvec(const Vector& v, Index rows, Index cols) {
    if (v.size() != rows * cols) throw ShapeError("unvec: length does not match rows*cols");
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    require_rows_match(a, b, "hconcat");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

/// P[P_N[X] Z] given P_N[X].
///
/// The rank cutoff is scaled by sigma_max(Z), not by sigma_max(P_N[X] Z): when
/// col(Z) lies inside col(X) the product is pure rounding noise, and a cutoff
/// relative to that noise would count it as full rank.
inline Projector residual_projector(const Matrix& pnx, const Matrix& z) {
    require_rows_match(pnx, z, "residual_projector");
    if (z.cols() == 0) return {Matrix::Zero(z.rows(), z.rows()), 0, 0.0};
    const Matrix pz = pnx * z;
    const auto s = detail::thin_svd(z, false).s;
    const double zmax = s.size() ? s(0) : 0.0;
    const double tol = 10.0 * static_cast<double>(std::max(z.rows(), z.cols())) *
                       std::numeric_limits<double>::epsilon() * zmax;
    if (tol == 0.0) return {Matrix::Zero(z.rows(), z.rows()), 0, 0.0};
    return col_projector(pz, tol);
}

/// ||P[[X Z]] - (P[X] + P[P_N[X] Z])||_F.
inline double block_projection_identity_check(const Matrix& x, const Matrix& z) {
    require_rows_match(x, z, "block_projection_identity_check");
    require_finite(x, "block_projection_identity_check");
    require_finite(z, "block_projection_identity_check");
    const Matrix pnx = null_projector(x).matrix;
    const Matrix lhs = col_projector(hconcat(x, z)).matrix;
    const Matrix rhs = col_projector(x).matrix + residual_projector(pnx, z).matrix;
    return (lhs - rhs).norm();
}

/// |tr((P_N[X] Y)^T P[P_N[X] Z] Y) - ||P[P_N[X] Z] Y||_F^2|.
inline double trace_identity_residual(const Matrix& x, const Matrix& z, const Matrix& y) {
    require_rows_match(x, z, "trace_identity_residual");
    require_rows_match(x, y, "trace_identity_residual");
    const Matrix pnx = null_projector(x).matrix;
    const Matrix pc = residual_projector(pnx, z).matrix;
    const Matrix captured = pc * y;
    const double tr = ((pnx * y).transpose() * captured).trace();
    return std::abs(tr - captured.squaredNorm());
}

}  // namespace reslab
