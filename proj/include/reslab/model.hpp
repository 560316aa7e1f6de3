#pragma once

// ResNet predictor h(x) = W (x + V z(x, theta)) and its residual stack z.
//
// Batches are row-major in the example index: X is m x d_x, Z is m x d_z and
// the output H is m x d_y. Jacobians with respect to W and V use the
// column-major vec layout from projkit.
//
// Residual stack layouts (theta):
//   plain   theta = [A_0 .. A_{H-1}],  A_0: w_0 x d_x,  A_l: w_l x w_{l-1}
//           z_{l+1} = act(A_l z_l),  z_0 = x
//   skip    theta = [E, A_0 .. A_{H-1}],  E: w x d_x,  A_l: w x w
//           z_0 = E x,  z_{l+1} = z_l + A_l act(z_l)
// With append_bias_unit the stack output gets a trailing constant 1.
// Depth 0 gives z = 0 of length d_z.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "reslab/errors.hpp"
#include "reslab/projkit.hpp"
#include "reslab/rng.hpp"

namespace reslab {

enum class Activation { relu, tanh, sigmoid, identity };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity" || s == "linear") return Activation::identity;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

struct StackConfig {
    std::size_t depth = 0;
    std::vector<Index> widths;
    Activation activation = Activation::relu;
    bool use_skip = false;
    bool append_bias_unit = false;
    /// Output width of z. Must equal widths.back() (+1 with a bias unit) when depth > 0.
    Index d_z = 1;

    void validate() const {
        if (widths.size() != depth) throw ConfigError("stack: widths length must equal depth");
        if (d_z < 1) throw ConfigError("stack: d_z must be at least 1");
        for (Index w : widths)
            if (w < 1) throw ConfigError("stack: widths must be positive");
        if (depth > 0) {
            const Index expect = widths.back() + (append_bias_unit ? 1 : 0);
            if (expect != d_z)
                throw ConfigError("stack: last width" + std::string(append_bias_unit ? " + bias unit" : "") +
                                  " must equal d_z");
            if (use_skip)
                for (Index w : widths)
                    if (w != widths.front()) throw ConfigError("stack: skip blocks need equal widths");
        }
    }

    /// Expected shapes of theta for input dimension d_x.
    std::vector<std::pair<Index, Index>> layer_shapes(Index d_x) const {
        std::vector<std::pair<Index, Index>> out;
        if (depth == 0) return out;
        if (use_skip) {
            out.emplace_back(widths.front(), d_x);
            for (std::size_t l = 0; l < depth; ++l) out.emplace_back(widths[l], widths[l]);
        } else {
            Index in = d_x;
            for (std::size_t l = 0; l < depth; ++l) {
                out.emplace_back(widths[l], in);
                in = widths[l];
            }
        }
        return out;
    }
};

struct ResNetParams {
    Matrix W;  // d_y x d_x
    Matrix V;  // d_x x d_z
    std::vector<Matrix> theta;

    Index d_y() const { return W.rows(); }
    Index d_x() const { return W.cols(); }
    Index d_z() const { return V.cols(); }

    Index parameter_count() const {
        Index n = W.size() + V.size();
        for (const auto& t : theta) n += t.size();
        return n;
    }

    /// [vec(W); vec(V); vec(theta_0); ...].
    Vector flatten() const {
        Vector out(parameter_count());
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

    /// Same shapes as *this, values from `flat`.
    ResNetParams unflatten(const Vector& flat) const {
        if (flat.size() != parameter_count()) throw ShapeError("unflatten: wrong parameter count");
        ResNetParams out;
        Index k = 0;
        auto take = [&](const Matrix& like) {
            Matrix m = unvec(flat.segment(k, like.size()), like.rows(), like.cols());
            k += like.size();
            return m;
        };
        out.W = take(W);
        out.V = take(V);
        out.theta.reserve(theta.size());
        for (const auto& t : theta) out.theta.push_back(take(t));
        return out;
    }
};

struct DataSet {
    Matrix X;  // m x d_x
    Matrix Y;  // m x d_y
    bool bias_augmented = false;

    Index m() const { return X.rows(); }
    Index d_x() const { return X.cols(); }
    Index d_y() const { return Y.cols(); }

    void validate() const {
        if (X.rows() < 1) throw ShapeError("dataset: needs at least one example");
        require_rows_match(X, Y, "dataset");
        require_finite(X, "dataset X");
        require_finite(Y, "dataset Y");
        if (bias_augmented && (X.cols() == 0 || (X.col(X.cols() - 1).array() != 1.0).any()))
            throw InvalidState("dataset: flagged bias-augmented but last column is not all ones");
    }
};

/// Appends a column of ones to X.
inline DataSet augment_bias(const DataSet& data) {
    if (data.bias_augmented) throw InvalidState("augment_bias: dataset is already bias-augmented");
    DataSet out;
    out.X.resize(data.X.rows(), data.X.cols() + 1);
    out.X << data.X, Matrix::Ones(data.X.rows(), 1);
    out.Y = data.Y;
    out.bias_augmented = true;
    return out;
}

inline void check_shapes(const ResNetParams& p, const StackConfig& cfg, Index d_x) {
    if (p.W.cols() != d_x) throw ShapeError("W must have d_x columns");
    if (p.V.rows() != d_x) throw ShapeError("V must have d_x rows");
    if (p.V.cols() != cfg.d_z) throw ShapeError("V must have d_z columns");
    const auto shapes = cfg.layer_shapes(d_x);
    if (shapes.size() != p.theta.size()) throw ShapeError("theta has the wrong number of layers");
    for (std::size_t l = 0; l < shapes.size(); ++l)
        if (p.theta[l].rows() != shapes[l].first || p.theta[l].cols() != shapes[l].second)
            throw ShapeError("theta layer " + std::to_string(l) + " has the wrong shape");
}

/// He-style Gaussian init, stddev sqrt(2 / fan_in), drawn in the order W, V, theta.
inline ResNetParams init_params(const StackConfig& cfg, Index d_x, Index d_y, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ResNetParams p;
    p.W = rng.gaussian_matrix(d_y, d_x, std::sqrt(2.0 / static_cast<double>(d_x)));
    p.V = rng.gaussian_matrix(d_x, cfg.d_z, std::sqrt(2.0 / static_cast<double>(cfg.d_z)));
    for (auto [r, c] : cfg.layer_shapes(d_x)) p.theta.push_back(rng.gaussian_matrix(r, c, std::sqrt(2.0 / static_cast<double>(c))));
    return p;
}

namespace detail {

inline Matrix activate(Activation a, const Matrix& pre) {
    switch (a) {
        case Activation::relu: return pre.cwiseMax(0.0);
        case Activation::tanh: return pre.array().tanh().matrix();
        case Activation::sigmoid: return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
        case Activation::identity: return pre;
    }
    return pre;
}

/// Elementwise derivative; relu'(0) = 0.
inline Matrix activate_grad(Activation a, const Matrix& pre, const Matrix& post) {
    switch (a) {
        case Activation::relu: return (pre.array() > 0.0).cast<double>().matrix();
        case Activation::tanh: return (1.0 - post.array().square()).matrix();
        case Activation::sigmoid: return (post.array() * (1.0 - post.array())).matrix();
        case Activation::identity: return Matrix::Ones(pre.rows(), pre.cols());
    }
    return Matrix::Ones(pre.rows(), pre.cols());
}

}  // namespace detail

/// Intermediate values of a batched stack evaluation, kept for backprop.
struct StackTrace {
    std::vector<Matrix> inputs;  // layer inputs (plain) or block states z_l (skip)
    std::vector<Matrix> pre;     // arguments of the activation
    std::vector<Matrix> post;    // activation outputs
    Matrix Z;                    // m x d_z, bias unit included
};

inline StackTrace residual_forward_batch(const Matrix& X, const std::vector<Matrix>& theta, const StackConfig& cfg) {
    StackTrace tr;
    const Index m = X.rows();
    if (cfg.depth == 0) {
        tr.Z = Matrix::Zero(m, cfg.d_z);
        return tr;
    }
    Matrix a;
    if (cfg.use_skip) {
        a = X * theta[0].transpose();
        for (std::size_t l = 0; l < cfg.depth; ++l) {
            const Matrix& A = theta[l + 1];
            Matrix s = detail::activate(cfg.activation, a);
            tr.inputs.push_back(a);
            tr.pre.push_back(a);
            a = a + s * A.transpose();
            tr.post.push_back(std::move(s));
        }
    } else {
        a = X;
        for (std::size_t l = 0; l < cfg.depth; ++l) {
            tr.inputs.push_back(a);
            Matrix pre = a * theta[l].transpose();
            a = detail::activate(cfg.activation, pre);
            tr.pre.push_back(std::move(pre));
            tr.post.push_back(a);
        }
    }
    if (cfg.append_bias_unit) {
        tr.Z.resize(m, a.cols() + 1);
        tr.Z << a, Matrix::Ones(m, 1);
    } else {
        tr.Z = std::move(a);
    }
    return tr;
}

/// Z(X, theta), one row per example.
inline Matrix residual_matrix(const Matrix& X, const std::vector<Matrix>& theta, const StackConfig& cfg) {
    return residual_forward_batch(X, theta, cfg).Z;
}

inline Vector residual_forward(const Vector& x, const std::vector<Matrix>& theta, const StackConfig& cfg) {
    cfg.validate();
    const auto shapes = cfg.layer_shapes(x.size());
    if (shapes.size() != theta.size()) throw ShapeError("residual_forward: wrong number of layers");
    for (std::size_t l = 0; l < shapes.size(); ++l)
        if (theta[l].rows() != shapes[l].first || theta[l].cols() != shapes[l].second)
            throw ShapeError("residual_forward: layer " + std::to_string(l) + " has the wrong shape");
    return residual_matrix(x.transpose(), theta, cfg).row(0).transpose();
}

/// Gradient of a scalar objective with respect to theta, given dObj/dZ (m x d_z).
inline std::vector<Matrix> backprop_stack(const Matrix& X, const StackTrace& tr, const std::vector<Matrix>& theta,
                                          const StackConfig& cfg, Matrix dZ) {
    std::vector<Matrix> grads(theta.size());
    if (cfg.depth == 0) return grads;
    Matrix g = cfg.append_bias_unit ? Matrix(dZ.leftCols(dZ.cols() - 1)) : std::move(dZ);
    if (cfg.use_skip) {
        for (std::size_t l = cfg.depth; l-- > 0;) {
            const Matrix& A = theta[l + 1];
            grads[l + 1] = g.transpose() * tr.post[l];
            const Matrix through = (g * A).cwiseProduct(detail::activate_grad(cfg.activation, tr.pre[l], tr.post[l]));
            g += through;
        }
        grads[0] = g.transpose() * X;
    } else {
        for (std::size_t l = cfg.depth; l-- > 0;) {
            const Matrix dpre = g.cwiseProduct(detail::activate_grad(cfg.activation, tr.pre[l], tr.post[l]));
            grads[l] = dpre.transpose() * tr.inputs[l];
            if (l > 0) g = dpre * theta[l];
        }
    }
    return grads;
}

/// Batched outputs H = (X + Z V^T) W^T.
inline Matrix predict_batch(const Matrix& X, const Matrix& Z, const ResNetParams& p) {
    return (X + Z * p.V.transpose()) * p.W.transpose();
}

inline Matrix predict_batch(const Matrix& X, const ResNetParams& p, const StackConfig& cfg) {
    return predict_batch(X, residual_matrix(X, p.theta, cfg), p);
}

inline Vector predict(const Vector& x, const ResNetParams& p, const StackConfig& cfg) {
    check_shapes(p, cfg, x.size());
    const Vector z = residual_forward(x, p.theta, cfg);
    return p.W * (x + p.V * z);
}

/// dh/dvec(W) = (x + V z)^T kron I_{d_y}.
inline Matrix dh_dW(const Vector& x, const ResNetParams& p, const StackConfig& cfg) {
    check_shapes(p, cfg, x.size());
    const Vector z = residual_forward(x, p.theta, cfg);
    const Vector u = x + p.V * z;
    return kron(u.transpose(), Matrix::Identity(p.d_y(), p.d_y()));
}

/// dh/dvec(V) = z^T kron W.
inline Matrix dh_dV(const Vector& x, const ResNetParams& p, const StackConfig& cfg) {
    check_shapes(p, cfg, x.size());
    const Vector z = residual_forward(x, p.theta, cfg);
    return kron(z.transpose(), p.W);
}

/// W2 max(0, W1 x).
inline Vector plain_relu_net_predict(const Vector& x, const Matrix& W1, const Matrix& W2) {
    if (W1.cols() != x.size()) throw ShapeError("plain_relu_net_predict: W1 columns must equal input length");
    if (W2.cols() != W1.rows()) throw ShapeError("plain_relu_net_predict: W2 columns must equal W1 rows");
    return W2 * (W1 * x).cwiseMax(0.0);
}

inline Matrix plain_relu_net_predict_batch(const Matrix& X, const Matrix& W1, const Matrix& W2) {
    if (W1.cols() != X.cols()) throw ShapeError("plain_relu_net_predict: W1 columns must equal input length");
    if (W2.cols() != W1.rows()) throw ShapeError("plain_relu_net_predict: W2 columns must equal W1 rows");
    return (X * W1.transpose()).cwiseMax(0.0) * W2.transpose();
}

/// Output-width assumption A1: d_y <= min(d_x, d_z).
inline void require_output_dim_guard(Index d_x, Index d_y, Index d_z) {
    if (d_y > std::min(d_x, d_z))
        throw ConfigError("assumption A1 violated: need d_y <= min(d_x, d_z), got d_y=" + std::to_string(d_y) +
                          ", d_x=" + std::to_string(d_x) + ", d_z=" + std::to_string(d_z));
}

}  // namespace reslab
