#pragma once

// Test-side reference computations. These deliberately avoid the library's
// own kernels: projectors come from column-pivoted QR, least squares from a
// complete orthogonal decomposition, forward passes from per-example loops.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "reslab/model.hpp"
#include "reslab/losses.hpp"
#include "reslab/rng.hpp"

namespace reftest {

using reslab::Index;
using reslab::Matrix;
using reslab::Vector;
using reslab::RowVector;

/// Orthogonal projector onto col(M) from a rank-revealing QR.
inline Matrix qr_projector(const Matrix& M) {
    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    qr.setThreshold(1e-10);
    const Index r = qr.rank();
    const Matrix Q = qr.householderQ() * Matrix::Identity(M.rows(), r);
    return Q * Q.transpose();
}

/// min_R (1/m) ||F R - Y||_F^2 via complete orthogonal decomposition.
inline double cod_lstsq_min(const Matrix& F, const Matrix& Y) {
    if (F.cols() == 0) return Y.squaredNorm() / static_cast<double>(Y.rows());
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(F);
    cod.setThreshold(1e-11);
    const Matrix R = cod.solve(Y);
    return (F * R - Y).squaredNorm() / static_cast<double>(Y.rows());
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

inline double act(reslab::Activation a, double t) {
    switch (a) {
        case reslab::Activation::relu: return t > 0 ? t : 0.0;
        case reslab::Activation::tanh: return std::tanh(t);
        case reslab::Activation::sigmoid: return 1.0 / (1.0 + std::exp(-t));
        case reslab::Activation::identity: return t;
    }
    return 0.0;
}

/// z(x, theta) one example at a time with explicit loops.
inline Vector ref_residual(const Vector& x, const std::vector<Matrix>& theta, const reslab::StackConfig& cfg) {
    Vector z;
    if (cfg.depth == 0) return Vector::Zero(cfg.d_z);
    auto matvec_act = [&](const Matrix& A, const Vector& v) {
        Vector out(A.rows());
        for (Index i = 0; i < A.rows(); ++i) {
            double s = 0.0;
            for (Index j = 0; j < A.cols(); ++j) s += A(i, j) * v(j);
            out(i) = act(cfg.activation, s);
        }
        return out;
    };
    if (cfg.use_skip) {
        z = theta[0] * x;
        for (std::size_t l = 1; l < theta.size(); ++l) {
            Vector s(z.size());
            for (Index i = 0; i < z.size(); ++i) s(i) = act(cfg.activation, z(i));
            z = z + theta[l] * s;
        }
    } else {
        z = x;
        for (const auto& A : theta) z = matvec_act(A, z);
    }
    if (cfg.append_bias_unit) {
        Vector b(z.size() + 1);
        b << z, 1.0;
        z = b;
    }
    return z;
}

inline Vector ref_predict(const Vector& x, const reslab::ResNetParams& p, const reslab::StackConfig& cfg) {
    const Vector z = ref_residual(x, p.theta, cfg);
    return p.W * (x + p.V * z);
}

/// Per-example losses written out directly.
inline double ref_loss(reslab::LossKind kind, const RowVector& h, const RowVector& y) {
    using reslab::LossKind;
    double v = 0.0;
    switch (kind) {
        case LossKind::squared:
            for (Index k = 0; k < h.size(); ++k) v += (h(k) - y(k)) * (h(k) - y(k));
            return v;
        case LossKind::logistic_binary: {
            const double p = 1.0 / (1.0 + std::exp(-h(0)));
            return -(y(0) * std::log(p) + (1.0 - y(0)) * std::log(1.0 - p));
        }
        case LossKind::softmax_cross_entropy: {
            double s = 0.0;
            for (Index k = 0; k < h.size(); ++k) s += std::exp(h(k));
            for (Index k = 0; k < h.size(); ++k)
                if (y(k) == 1.0) v = -std::log(std::exp(h(k)) / s);
            return v;
        }
        case LossKind::smoothed_hinge:
            for (Index k = 0; k < h.size(); ++k) {
                const double mrg = y(k) * h(k);
                if (mrg <= 0) v += 0.5 - mrg;
                else if (mrg < 1) v += 0.5 * (1 - mrg) * (1 - mrg);
            }
            return v;
    }
    return v;
}

inline double ref_objective(const Matrix& X, const Matrix& Y, const reslab::ResNetParams& p,
                            const reslab::StackConfig& cfg, reslab::LossKind kind) {
    double total = 0.0;
    for (Index i = 0; i < X.rows(); ++i) {
        const Vector h = ref_predict(X.row(i).transpose(), p, cfg);
        total += ref_loss(kind, h.transpose(), Y.row(i));
    }
    return total / static_cast<double>(X.rows());
}

/// Central differences of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, Vector x, double h = 1e-6) {
    Vector g(x.size());
    for (Index j = 0; j < x.size(); ++j) {
        const double x0 = x(j);
        x(j) = x0 + h;
        const double fp = f(x);
        x(j) = x0 - h;
        const double fm = f(x);
        x(j) = x0;
        g(j) = (fp - fm) / (2 * h);
    }
    return g;
}

/// Central differences of a vector function; column j is d f / d x_j.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, Vector x, double h = 1e-6) {
    const Vector f0 = f(x);
    Matrix J(f0.size(), x.size());
    for (Index j = 0; j < x.size(); ++j) {
        const double x0 = x(j);
        x(j) = x0 + h;
        const Vector fp = f(x);
        x(j) = x0 - h;
        const Vector fm = f(x);
        x(j) = x0;
        J.col(j) = (fp - fm) / (2 * h);
    }
    return J;
}

/// Targets valid for `kind` from raw scores.
inline Matrix labels_for(reslab::LossKind kind, const Matrix& S) {
    Matrix Y = Matrix::Zero(S.rows(), S.cols());
    for (Index i = 0; i < S.rows(); ++i) {
        Index best = 0;
        S.row(i).maxCoeff(&best);
        for (Index j = 0; j < S.cols(); ++j) {
            switch (kind) {
                case reslab::LossKind::squared: Y(i, j) = S(i, j); break;
                case reslab::LossKind::logistic_binary: Y(i, j) = S(i, j) > 0 ? 1 : 0; break;
                case reslab::LossKind::softmax_cross_entropy: Y(i, j) = j == best ? 1 : 0; break;
                case reslab::LossKind::smoothed_hinge: Y(i, j) = S(i, j) > 0 ? 1 : -1; break;
            }
        }
    }
    return Y;
}

inline reslab::StackConfig stack(std::size_t depth, Index width, reslab::Activation a, bool skip = false,
                                 bool bias_unit = false) {
    reslab::StackConfig c;
    c.depth = depth;
    c.widths.assign(depth, width);
    c.activation = a;
    c.use_skip = skip;
    c.append_bias_unit = bias_unit;
    c.d_z = depth > 0 ? width + (bias_unit ? 1 : 0) : width;
    return c;
}

inline reslab::ResNetParams random_params(reslab::Rng& rng, const reslab::StackConfig& cfg, Index dx, Index dy,
                                          double scale = 1.0) {
    reslab::ResNetParams p;
    p.W = rng.gaussian_matrix(dy, dx, scale);
    p.V = rng.gaussian_matrix(dx, cfg.d_z, scale);
    for (const auto& [r, c] : cfg.layer_shapes(dx)) p.theta.push_back(rng.gaussian_matrix(r, c, scale));
    return p;
}

}  // namespace reftest
