#pragma once

// Empirical objective L(W, V, theta) = (1/m) sum_i l(h(x_i), y_i) and its
// full gradient.

#include <cmath>
#include <vector>

#include "reslab/losses.hpp"
#include "reslab/model.hpp"

namespace reslab {

struct Gradients {
    Matrix W;
    Matrix V;
    std::vector<Matrix> theta;

    /// Same layout as ResNetParams::flatten.
    Vector flatten() const {
        Index n = W.size() + V.size();
        for (const auto& t : theta) n += t.size();
        Vector out(n);
        Index k = 0;
        auto put = [&](const Matrix& m) {
            out.segment(k, m.size()) = vec(m);
            k += m.size();
        };
        put(W);
        put(V);
        for (const auto& t : theta) put(t);
        return out;
    }

    double norm() const { return flatten().norm(); }
};

/// Loss value and gradients from one forward/backward pass.
struct ObjectiveEval {
    double value = 0.0;
    Gradients grad;
    Matrix Z;  // residual representation at the evaluated theta
    Matrix D;  // m x d_y, row i is dl/dh at example i
};

inline void check_problem(const DataSet& data, const ResNetParams& p, const StackConfig& cfg) {
    cfg.validate();
    data.validate();
    check_shapes(p, cfg, data.d_x());
    if (p.W.rows() != data.d_y()) throw ShapeError("W must have d_y rows");
}

/// Objective value only. Inputs are assumed already checked.
inline double objective_value_unchecked(const DataSet& data, const ResNetParams& p, const StackConfig& cfg,
                                        LossKind kind) {
    const Matrix H = predict_batch(data.X, p, cfg);
    if (!H.allFinite()) return std::numeric_limits<double>::infinity();
    return mean_loss(kind, H, data.Y);
}

inline double empirical_objective(const DataSet& data, const ResNetParams& p, const StackConfig& cfg, LossKind kind) {
    check_problem(data, p, cfg);
    validate_targets(kind, data.Y);
    const double v = objective_value_unchecked(data, p, cfg, kind);
    if (!std::isfinite(v)) throw NumericalError("empirical_objective: non-finite loss");
    return v;
}

/// Value and full gradient. Inputs are assumed already checked.
inline ObjectiveEval evaluate_unchecked(const DataSet& data, const ResNetParams& p, const StackConfig& cfg,
                                        LossKind kind) {
    ObjectiveEval out;
    const StackTrace tr = residual_forward_batch(data.X, p.theta, cfg);
    const Matrix U = data.X + tr.Z * p.V.transpose();  // rows are x_i + V z_i
    const Matrix H = U * p.W.transpose();
    if (!H.allFinite()) throw NumericalError("objective: non-finite network output");
    out.value = mean_loss(kind, H, data.Y, &out.D);
    if (!std::isfinite(out.value)) throw NumericalError("objective: non-finite loss");
    const double inv_m = 1.0 / static_cast<double>(data.m());
    out.grad.W = inv_m * (out.D.transpose() * U);
    out.grad.V = inv_m * (p.W.transpose() * (out.D.transpose() * tr.Z));
    Matrix dZ = inv_m * (out.D * p.W * p.V);
    out.grad.theta = backprop_stack(data.X, tr, p.theta, cfg, std::move(dZ));
    out.Z = tr.Z;
    return out;
}

/// dL/dW (d_y x d_x), dL/dV (d_x x d_z) and dL/dtheta per layer.
inline Gradients grad_loss_params(const DataSet& data, const ResNetParams& p, const StackConfig& cfg, LossKind kind) {
    check_problem(data, p, cfg);
    validate_targets(kind, data.Y);
    return evaluate_unchecked(data, p, cfg, kind).grad;
}

}  // namespace reslab
