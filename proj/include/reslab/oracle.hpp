#pragma once

// Global minimum values of linear basis-function models over the bases {x}
// and {x, z}: closed form for squared loss, line-search descent for any convex
// loss.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "reslab/errors.hpp"
#include "reslab/losses.hpp"
#include "reslab/model.hpp"
#include "reslab/optim.hpp"
#include "reslab/projkit.hpp"

namespace reslab {

struct OracleResult {
    double l_star_x = 0.0;
    double l_star_xz = 0.0;
    double improvement = 0.0;
    Matrix residual_y;  // P_N[X] Y
    Matrix captured;    // P[P_N[X] Z] Y
};

struct LinearModelFit {
    Matrix R1;  // d_y x d_x
    Matrix R2;  // d_y x d_z
    double objective = 0.0;
    double grad_norm = 0.0;
    long iterations = 0;
};

/// Raised when the convex solver exhausts its budget; carries the best iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, LinearModelFit best) : Error(what), best_(std::move(best)) {}
    const LinearModelFit& best() const noexcept { return best_; }

private:
    LinearModelFit best_;
};

/// (1/m) ||P_N[X] Y||_F^2.
inline double sq_oracle_x(const Matrix& X, const Matrix& Y) {
    require_rows_match(X, Y, "sq_oracle_x");
    require_finite(X, "sq_oracle_x");
    require_finite(Y, "sq_oracle_x");
    return (null_projector(X).matrix * Y).squaredNorm() / static_cast<double>(X.rows());
}

inline OracleResult sq_oracle_xz(const Matrix& X, const Matrix& Z, const Matrix& Y) {
    require_rows_match(X, Y, "sq_oracle_xz");
    require_rows_match(X, Z, "sq_oracle_xz");
    require_finite(X, "sq_oracle_xz");
    require_finite(Z, "sq_oracle_xz");
    require_finite(Y, "sq_oracle_xz");
    const double inv_m = 1.0 / static_cast<double>(X.rows());
    const Matrix pnx = null_projector(X).matrix;
    OracleResult out;
    out.residual_y = pnx * Y;
    out.captured = residual_projector(pnx, Z).matrix * Y;
    out.l_star_x = inv_m * out.residual_y.squaredNorm();
    out.improvement = inv_m * out.captured.squaredNorm();
    out.l_star_xz = out.l_star_x - out.improvement;
    return out;
}

/// (1/m) ||P[P_N[X] Z] P_N[X] Y||_F^2, the second form of the improvement term.
inline double improvement_alt_form(const Matrix& X, const Matrix& Z, const Matrix& Y) {
    require_rows_match(X, Y, "improvement_alt_form");
    require_rows_match(X, Z, "improvement_alt_form");
    require_finite(X, "improvement_alt_form");
    require_finite(Z, "improvement_alt_form");
    require_finite(Y, "improvement_alt_form");
    const Matrix pnx = null_projector(X).matrix;
    return (residual_projector(pnx, Z).matrix * (pnx * Y)).squaredNorm() / static_cast<double>(X.rows());
}

/// min_R (1/m) ||[X Z] R - Y||_F^2 through the normal equations,
/// R = ([X Z]^T [X Z])^+ [X Z]^T Y. A numerically separate route from sq_oracle_xz.
inline double lstsq_normal_equations(const Matrix& X, const Matrix& Z, const Matrix& Y) {
    require_rows_match(X, Y, "lstsq_normal_equations");
    const Matrix F = hconcat(X, Z);
    const Matrix gram = F.transpose() * F;
    const Matrix R = pinv(gram) * (F.transpose() * Y);
    return (F * R - Y).squaredNorm() / static_cast<double>(X.rows());
}

struct ConvexSolverOptions {
    long max_iter = 200000;
    double armijo_slope = 1e-4;
    double shrink = 0.5;
    /// L-BFGS directions by default; plain gradient descent warm-starts each
    /// line search at twice the last accepted step.
    DescentMethod method = DescentMethod::lbfgs;
    /// Optional starting point [R1 R2]; zero when absent.
    std::optional<Matrix> initial;
};

/// inf over (R1, R2) of (1/m) sum_i l(R1 x_i + R2 z_i, y_i), by line-search
/// descent with Armijo backtracking.
inline LinearModelFit convex_oracle_xz(const DataSet& data, const Matrix& Z, LossKind kind, double tol,
                                       const ConvexSolverOptions& opts = {}) {
    data.validate();
    require_rows_match(data.X, Z, "convex_oracle_xz");
    require_finite(Z, "convex_oracle_xz");
    validate_targets(kind, data.Y);
    if (!(tol > 0.0)) throw InvalidInput("convex_oracle_xz: tol must be positive");

    const Matrix F = hconcat(data.X, Z);
    const Index dx = data.d_x();
    const Index dy = data.d_y();
    const Index nf = F.cols();
    const double inv_m = 1.0 / static_cast<double>(data.m());
    Matrix R0 = Matrix::Zero(dy, nf);
    if (opts.initial) {
        if (opts.initial->rows() != dy || opts.initial->cols() != nf)
            throw ShapeError("convex_oracle_xz: initial point has the wrong shape");
        R0 = *opts.initial;
    }

    auto value = [&](const Vector& r) { return mean_loss(kind, F * unvec(r, dy, nf).transpose(), data.Y); };
    auto value_grad = [&](const Vector& r, Vector& g) {
        Matrix D;
        const double v = mean_loss(kind, F * unvec(r, dy, nf).transpose(), data.Y, &D);
        g = vec(inv_m * (D.transpose() * F));
        return v;
    };
    DescentOptions d;
    d.method = opts.method;
    d.max_iter = opts.max_iter;
    d.grad_tol = tol;
    d.armijo_slope = opts.armijo_slope;
    d.shrink = opts.shrink;
    d.warm_start_step = true;
    d.trace_stride = 0;
    const DescentResult r = minimize(vec(R0), value, value_grad, d);

    LinearModelFit fit;
    const Matrix R = unvec(r.x, dy, nf);
    fit.R1 = R.leftCols(dx);
    fit.R2 = R.rightCols(nf - dx);
    fit.objective = r.value;
    fit.grad_norm = r.grad_norm;
    fit.iterations = r.iterations;
    if (!std::isfinite(fit.objective)) throw NumericalError("convex_oracle_xz: non-finite objective");
    if (fit.grad_norm > tol)
    {
        char msg[160];
        std::snprintf(msg, sizeof msg, "convex_oracle_xz: gradient norm %.3e above tol %.3e after %ld iterations%s",
                      fit.grad_norm, tol, fit.iterations, r.stalled ? " (line search stalled)" : "");
        throw ConvergenceError(msg, fit);
    }
    return fit;
}

/// Objective of the linear model at (R1, R2), for re-evaluating a fit.
inline double linear_model_objective(const DataSet& data, const Matrix& Z, LossKind kind, const Matrix& R1,
                                     const Matrix& R2) {
    const Matrix H = data.X * R1.transpose() + Z * R2.transpose();
    return mean_loss(kind, H, data.Y);
}

/// "Non-negligible" residual representation: improvement > 1e-8 * max(1, L*_x).
inline bool improvement_is_non_negligible(const OracleResult& r) {
    return r.improvement > 1e-8 * std::max(1.0, r.l_star_x);
}

}  // namespace reslab
