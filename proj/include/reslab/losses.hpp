#pragma once

// Convex, differentiable per-example losses l(h, y) and D = dl/dh.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "reslab/errors.hpp"
#include "reslab/projkit.hpp"

namespace reslab {

enum class LossKind { squared, logistic_binary, softmax_cross_entropy, smoothed_hinge };

inline std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::squared: return "squared";
        case LossKind::logistic_binary: return "logistic_binary";
        case LossKind::softmax_cross_entropy: return "softmax_cross_entropy";
        case LossKind::smoothed_hinge: return "smoothed_hinge";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "squared") return LossKind::squared;
    if (s == "logistic_binary" || s == "logistic") return LossKind::logistic_binary;
    if (s == "softmax_cross_entropy" || s == "cross_entropy") return LossKind::softmax_cross_entropy;
    if (s == "smoothed_hinge") return LossKind::smoothed_hinge;
    throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

struct LossEval {
    double value = 0.0;
    RowVector D;  // 1 x d_y
};

/// Checks that a target row is a valid encoding for `kind`.
inline void validate_target(LossKind kind, const RowVector& y) {
    if (!y.allFinite()) throw InvalidInput("target: non-finite entry");
    switch (kind) {
        case LossKind::squared: return;
        case LossKind::logistic_binary:
            if (y.size() != 1 || (y(0) != 0.0 && y(0) != 1.0))
                throw InvalidInput("logistic_binary: target must be a single 0/1 value");
            return;
        case LossKind::softmax_cross_entropy: {
            int ones = 0;
            for (Index k = 0; k < y.size(); ++k) {
                if (y(k) == 1.0) ++ones;
                else if (y(k) != 0.0) throw InvalidInput("softmax_cross_entropy: target must be one-hot");
            }
            if (ones != 1) throw InvalidInput("softmax_cross_entropy: target must be one-hot");
            return;
        }
        case LossKind::smoothed_hinge:
            for (Index k = 0; k < y.size(); ++k)
                if (y(k) != 1.0 && y(k) != -1.0) throw InvalidInput("smoothed_hinge: targets must be -1 or +1");
            return;
    }
}

inline void validate_targets(LossKind kind, const Matrix& Y) {
    for (Index i = 0; i < Y.rows(); ++i) validate_target(kind, Y.row(i));
}

namespace detail {

inline double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Loss value and gradient without target validation.
inline double loss_unchecked(LossKind kind, const RowVector& h, const RowVector& y, RowVector* D) {
    switch (kind) {
        case LossKind::squared: {
            const RowVector r = h - y;
            if (D) *D = 2.0 * r;
            return r.squaredNorm();
        }
        case LossKind::logistic_binary: {
            // log(1 + e^h) - y h
            if (D) *D = RowVector::Constant(1, sigmoid(h(0)) - y(0));
            return softplus(h(0)) - y(0) * h(0);
        }
        case LossKind::softmax_cross_entropy: {
            const double shift = h.maxCoeff();
            const RowVector e = (h.array() - shift).exp().matrix();
            const double sum = e.sum();
            const double lse = shift + std::log(sum);
            if (D) *D = e / sum - y;
            return lse - h.dot(y);
        }
        case LossKind::smoothed_hinge: {
            double value = 0.0;
            if (D) D->setZero(h.size());
            for (Index k = 0; k < h.size(); ++k) {
                const double margin = y(k) * h(k);
                if (margin >= 1.0) continue;
                if (margin >= 0.0) {
                    value += 0.5 * (1.0 - margin) * (1.0 - margin);
                    if (D) (*D)(k) = -(1.0 - margin) * y(k);
                } else {
                    value += 0.5 - margin;
                    if (D) (*D)(k) = -y(k);
                }
            }
            return value;
        }
    }
    return 0.0;
}

}  // namespace detail

inline LossEval loss_eval(LossKind kind, const RowVector& h, const RowVector& y) {
    if (h.size() != y.size()) throw ShapeError("loss_eval: h and y differ in length");
    if (!h.allFinite()) throw InvalidInput("loss_eval: non-finite prediction");
    validate_target(kind, y);
    LossEval out;
    out.value = detail::loss_unchecked(kind, h, y, &out.D);
    return out;
}

/// Mean loss over rows of H against Y; fills dL/dH rows (unscaled D_i) when D is given.
/// Targets are assumed validated.
inline double mean_loss(LossKind kind, const Matrix& H, const Matrix& Y, Matrix* D = nullptr) {
    const Index m = H.rows();
    double total = 0.0;
    if (D) D->resize(H.rows(), H.cols());
    if (kind == LossKind::squared) {
        const Matrix r = H - Y;
        if (D) *D = 2.0 * r;
        total = r.squaredNorm();
    } else if (kind == LossKind::softmax_cross_entropy) {
        const Vector shift = H.rowwise().maxCoeff();
        const Matrix E = (H.colwise() - shift).array().exp().matrix();
        const Vector sums = E.rowwise().sum();
        total = (shift.array() + sums.array().log()).sum() - H.cwiseProduct(Y).sum();
        if (D) *D = E.array().colwise() / sums.array() - Y.array();
    } else {
        RowVector d;
        for (Index i = 0; i < m; ++i) {
            total += detail::loss_unchecked(kind, H.row(i), Y.row(i), D ? &d : nullptr);
            if (D) D->row(i) = d;
        }
    }
    return total / static_cast<double>(m);
}

/// l(t h1 + (1-t) h2, y) - [t l(h1, y) + (1-t) l(h2, y)]; never positive for a convex loss.
inline double convexity_probe(LossKind kind, const RowVector& y, const RowVector& h1, const RowVector& h2, double t) {
    if (h1.size() != y.size() || h2.size() != y.size()) throw ShapeError("convexity_probe: length mismatch");
    validate_target(kind, y);
    const RowVector mid = t * h1 + (1.0 - t) * h2;
    const double lm = detail::loss_unchecked(kind, mid, y, nullptr);
    const double l1 = detail::loss_unchecked(kind, h1, y, nullptr);
    const double l2 = detail::loss_unchecked(kind, h2, y, nullptr);
    return lm - (t * l1 + (1.0 - t) * l2);
}

}  // namespace reslab
