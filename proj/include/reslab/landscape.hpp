#pragma once

// Training to approximate local minima, sampling-based local-minimum
// certification, the necessary-condition residuals at a minimum, and the
// comparison of loss values against the basis-function oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Eigenvalues>

#include "reslab/errors.hpp"
#include "reslab/losses.hpp"
#include "reslab/model.hpp"
#include "reslab/objective.hpp"
#include "reslab/optim.hpp"
#include "reslab/oracle.hpp"
#include "reslab/rng.hpp"

namespace reslab {

enum class Verdict { certified_local_min, saddle_or_uncertified, budget_exhausted };

inline std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::certified_local_min: return "certified_local_min";
        case Verdict::saddle_or_uncertified: return "saddle_or_uncertified";
        case Verdict::budget_exhausted: return "budget_exhausted";
    }
    return "?";
}

struct CertificationConfig {
    Index n_directions = 64;
    std::vector<double> radii{1e-2, 1e-3, 1e-4};
    bool hessian_check = true;
    Index hessian_dim_cap = 2000;
    /// Central-difference step on the gradient when one is available.
    double hessian_step = 1e-5;
    /// Step for the value-only second-difference Hessian.
    double hessian_step_value_only = 1e-4;

    void validate() const {
        if (n_directions < 1) throw ConfigError("certification: n_directions must be positive");
        if (radii.empty()) throw ConfigError("certification: radii must not be empty");
        for (std::size_t i = 0; i < radii.size(); ++i) {
            if (!(radii[i] > 0.0)) throw ConfigError("certification: radii must be positive");
            if (i > 0 && !(radii[i] < radii[i - 1])) throw ConfigError("certification: radii must be strictly decreasing");
        }
        if (!(hessian_step > 0.0) || !(hessian_step_value_only > 0.0))
            throw ConfigError("certification: Hessian steps must be positive");
    }
};

struct CertificationResult {
    Verdict verdict = Verdict::saddle_or_uncertified;
    double loss = 0.0;
    /// Largest observed loss decrease f(x0) - f(x0 + r d) per radius (negative when every probe increased it).
    std::vector<double> max_decrease;
    bool hessian_checked = false;
    double min_hessian_eigenvalue = std::numeric_limits<double>::quiet_NaN();
};

using ObjectiveFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

/// Certifies x0 as a local minimum of f by random perturbation plus the
/// steepest-descent direction and, when enabled and small enough, a
/// finite-difference Hessian. `grad` may be empty.
///
/// Certified iff no probe at the smallest radius lowers f by more than
/// 1e-12 (1 + |f(x0)|), and the Hessian (if checked) has no eigenvalue below -1e-6.
inline CertificationResult certify_point(const ObjectiveFn& f, const GradientFn& grad, const Vector& x0,
                                         const CertificationConfig& cert, std::uint64_t seed) {
    cert.validate();
    CertificationResult out;
    const double f0 = f(x0);
    out.loss = f0;
    if (!std::isfinite(f0)) throw NumericalError("certify: non-finite objective at the centre");
    const Index n = x0.size();
    Rng rng(seed);
    // Steepest descent is always probed: random directions miss a slow slide
    // towards an infimum that is not attained.
    Vector descent;
    if (grad) {
        descent = -grad(x0);
        const double gn = descent.norm();
        if (gn > 0.0 && std::isfinite(gn)) descent /= gn;
        else descent.resize(0);
    }
    auto decrease = [&](const Vector& d, double r) {
        const double fr = f(x0 + r * d);
        return std::isfinite(fr) ? f0 - fr : -std::numeric_limits<double>::infinity();
    };
    for (double r : cert.radii) {
        double worst = descent.size() > 0 ? decrease(descent, r) : -std::numeric_limits<double>::infinity();
        for (Index k = 0; k < cert.n_directions; ++k) worst = std::max(worst, decrease(rng.unit_vector(n), r));
        out.max_decrease.push_back(worst);
    }
    const bool probes_ok = out.max_decrease.back() <= 1e-12 * (1.0 + std::abs(f0));

    bool hessian_ok = true;
    if (cert.hessian_check && n <= cert.hessian_dim_cap) {
        Matrix H(n, n);
        if (grad) {
            const double h = cert.hessian_step;
            Vector xp = x0, xm = x0;
            for (Index j = 0; j < n; ++j) {
                xp(j) += h;
                xm(j) -= h;
                H.col(j) = (grad(xp) - grad(xm)) / (2.0 * h);
                xp(j) = x0(j);
                xm(j) = x0(j);
            }
        } else {
            const double h = cert.hessian_step_value_only;
            Vector x = x0;
            for (Index i = 0; i < n; ++i) {
                for (Index j = i; j < n; ++j) {
                    auto at = [&](double si, double sj) {
                        x(i) += si * h;
                        x(j) += sj * h;
                        const double v = f(x);
                        x(i) = x0(i);
                        x(j) = x0(j);
                        return v;
                    };
                    const double hij = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
                    H(i, j) = hij;
                    H(j, i) = hij;
                }
            }
        }
        const Matrix Hs = 0.5 * (H + H.transpose());
        if (!Hs.allFinite()) {
            hessian_ok = false;
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> eig(Hs, Eigen::EigenvaluesOnly);
            out.min_hessian_eigenvalue = eig.eigenvalues()(0);
            hessian_ok = out.min_hessian_eigenvalue >= -1e-6;
        }
        out.hessian_checked = true;
    }
    out.verdict = probes_ok && hessian_ok ? Verdict::certified_local_min : Verdict::saddle_or_uncertified;
    return out;
}

/// Certification of a ResNet parameter point over (W, V, theta) jointly.
inline CertificationResult certify_local_min(const DataSet& data, const ResNetParams& params, const StackConfig& cfg,
                                             LossKind kind, const CertificationConfig& cert, std::uint64_t seed) {
    check_problem(data, params, cfg);
    validate_targets(kind, data.Y);
    ObjectiveFn f = [&](const Vector& flat) {
        return objective_value_unchecked(data, params.unflatten(flat), cfg, kind);
    };
    GradientFn g = [&](const Vector& flat) {
        return evaluate_unchecked(data, params.unflatten(flat), cfg, kind).grad.flatten();
    };
    return certify_point(f, g, params.flatten(), cert, seed);
}

struct Lemma2Residuals {
    double z_residual = 0.0;  // ||(1/m) sum_i z_i D_i||_F
    double x_residual = 0.0;  // ||(1/m) sum_i x_i D_i||_F
};

inline Lemma2Residuals lemma2_residuals(const DataSet& data, const ResNetParams& params, const StackConfig& cfg,
                                        LossKind kind) {
    check_problem(data, params, cfg);
    validate_targets(kind, data.Y);
    const Matrix Z = residual_matrix(data.X, params.theta, cfg);
    Matrix D;
    mean_loss(kind, predict_batch(data.X, Z, params), data.Y, &D);
    const double inv_m = 1.0 / static_cast<double>(data.m());
    return {inv_m * (Z.transpose() * D).norm(), inv_m * (data.X.transpose() * D).norm()};
}

struct TheoremCheck {
    double loss = 0.0;
    double l_star_x = 0.0;
    double l_star_xz = 0.0;
    double improvement = 0.0;
    double improvement_alt = 0.0;  // squared loss only; equals improvement otherwise
    double gap = 0.0;              // loss - l_star_xz
    bool oracle_converged = true;
};

namespace detail {

/// Oracle comparison that keeps the best iterates when a convex solve stops early.
inline TheoremCheck theorem_check(const DataSet& data, const ResNetParams& params, const StackConfig& cfg,
                                  LossKind kind, double oracle_tol, std::string* failure) {
    check_problem(data, params, cfg);
    validate_targets(kind, data.Y);
    TheoremCheck out;
    const Matrix Z = residual_matrix(data.X, params.theta, cfg);
    out.loss = mean_loss(kind, predict_batch(data.X, Z, params), data.Y);
    if (kind == LossKind::squared) {
        const OracleResult r = sq_oracle_xz(data.X, Z, data.Y);
        out.l_star_x = r.l_star_x;
        out.l_star_xz = r.l_star_xz;
        out.improvement = r.improvement;
        out.improvement_alt = improvement_alt_form(data.X, Z, data.Y);
    } else {
        auto solve = [&](const Matrix& z, const Matrix& init) {
            ConvexSolverOptions o;
            o.initial = init;
            try {
                return convex_oracle_xz(data, z, kind, oracle_tol, o);
            } catch (const ConvergenceError& e) {
                out.oracle_converged = false;
                if (failure && failure->empty()) *failure = e.what();
                return e.best();
            }
        };
        const LinearModelFit fxz = solve(Z, hconcat(params.W, params.W * params.V));
        const LinearModelFit fx = solve(Matrix(data.m(), 0), fxz.R1);
        out.l_star_xz = fxz.objective;
        out.l_star_x = fx.objective;
        out.improvement = out.l_star_x - out.l_star_xz;
        out.improvement_alt = out.improvement;
    }
    out.gap = out.loss - out.l_star_xz;
    return out;
}

}  // namespace detail

/// Loss at the given point against the basis-function minima at its theta.
/// Squared loss uses the closed form; other kinds run the convex solver
/// (warm-started at R = [W, W V], so the reported minimum never exceeds the loss).
/// A solver that does not reach `oracle_tol` raises ConvergenceError.
inline TheoremCheck verify_theorem(const DataSet& data, const ResNetParams& params, const StackConfig& cfg,
                                   LossKind kind, double oracle_tol = 1e-9) {
    std::string failure;
    TheoremCheck out = detail::theorem_check(data, params, cfg, kind, oracle_tol, &failure);
    if (!out.oracle_converged) throw ConvergenceError(failure, LinearModelFit{});
    return out;
}

struct TrainReport {
    double final_loss = 0.0;
    double grad_norm = 0.0;
    long iterations = 0;
    Verdict certification = Verdict::budget_exhausted;
    double lemma2_z_residual = 0.0;
    double lemma2_x_residual = 0.0;
    double oracle_gap = 0.0;
    double l_star_x = 0.0;
    double l_star_xz = 0.0;
    double improvement = 0.0;
    bool oracle_converged = true;
    bool line_search_stalled = false;
    double min_hessian_eigenvalue = std::numeric_limits<double>::quiet_NaN();
    std::vector<TraceEntry> trace;
};

struct TrainOptions {
    CertificationConfig cert;
    DescentMethod method = DescentMethod::lbfgs;
    /// Record every k-th iteration in the trace (the first and last are always kept).
    long trace_stride = 1;
    double armijo_slope = 1e-4;
    double shrink = 0.5;
    double oracle_tol = 1e-9;
};

struct TrainResult {
    ResNetParams params;
    TrainReport report;
};

/// Full-batch descent from `init` over (W, V, theta). Every line search starts
/// at step 1.0 and halves until the Armijo condition holds, so the loss trace
/// never increases. Stops at grad_norm <= grad_tol or after max_iter steps,
/// then certifies the end point and fills the oracle comparison.
inline TrainResult train_from(const DataSet& data, const StackConfig& cfg, LossKind kind, const ResNetParams& init,
                              double grad_tol, long max_iter, std::uint64_t seed, const TrainOptions& opts = {}) {
    check_problem(data, init, cfg);
    require_output_dim_guard(data.d_x(), data.d_y(), cfg.d_z);
    validate_targets(kind, data.Y);
    if (!(grad_tol > 0.0)) throw ConfigError("train: grad_tol must be positive");
    if (max_iter < 0) throw ConfigError("train: max_iter must be non-negative");

    auto value = [&](const Vector& flat) { return objective_value_unchecked(data, init.unflatten(flat), cfg, kind); };
    auto value_grad = [&](const Vector& flat, Vector& g) {
        const ObjectiveEval ev = evaluate_unchecked(data, init.unflatten(flat), cfg, kind);
        g = ev.grad.flatten();
        return ev.value;
    };
    DescentOptions dopt;
    dopt.method = opts.method;
    dopt.max_iter = max_iter;
    dopt.grad_tol = grad_tol;
    dopt.armijo_slope = opts.armijo_slope;
    dopt.shrink = opts.shrink;
    dopt.trace_stride = std::max<long>(1, opts.trace_stride);
    DescentResult dr = minimize(init.flatten(), value, value_grad, dopt);

    TrainResult res;
    res.params = init.unflatten(dr.x);
    const ResNetParams& p = res.params;
    TrainReport& rep = res.report;
    rep.trace = std::move(dr.trace);
    rep.final_loss = dr.value;
    rep.grad_norm = dr.grad_norm;
    rep.iterations = dr.iterations;
    rep.line_search_stalled = dr.stalled;
    if (dr.grad_norm > grad_tol) {
        rep.certification = Verdict::budget_exhausted;
    } else {
        const CertificationResult c = certify_local_min(data, p, cfg, kind, opts.cert, Rng::derive(seed, 0xCE87));
        rep.certification = c.verdict;
        rep.min_hessian_eigenvalue = c.min_hessian_eigenvalue;
    }

    const Lemma2Residuals l2 = lemma2_residuals(data, p, cfg, kind);
    rep.lemma2_z_residual = l2.z_residual;
    rep.lemma2_x_residual = l2.x_residual;
    const TheoremCheck tc = detail::theorem_check(data, p, cfg, kind, opts.oracle_tol, nullptr);
    rep.oracle_gap = tc.gap;
    rep.l_star_x = tc.l_star_x;
    rep.l_star_xz = tc.l_star_xz;
    rep.improvement = tc.improvement;
    rep.oracle_converged = tc.oracle_converged;
    return res;
}

/// Seeded He initialization followed by train_from.
inline TrainResult train(const DataSet& data, const StackConfig& cfg, LossKind kind, std::uint64_t seed,
                         double grad_tol, long max_iter, const TrainOptions& opts = {}) {
    cfg.validate();
    data.validate();
    require_output_dim_guard(data.d_x(), data.d_y(), cfg.d_z);
    return train_from(data, cfg, kind, init_params(cfg, data.d_x(), data.d_y(), seed), grad_tol, max_iter, seed, opts);
}

/// |L(W, V + u v^T, theta) - L(W, V, theta)| for a given u, v.
inline double null_space_perturbation_deviation(const DataSet& data, const ResNetParams& params,
                                                const StackConfig& cfg, LossKind kind, const Vector& u,
                                                const Vector& v) {
    check_problem(data, params, cfg);
    if (u.size() != params.d_x() || v.size() != params.d_z()) throw ShapeError("perturbation: u or v has the wrong length");
    const double base = objective_value_unchecked(data, params, cfg, kind);
    ResNetParams moved = params;
    moved.V += u * v.transpose();
    return std::abs(objective_value_unchecked(data, moved, cfg, kind) - base);
}

/// Max over trials of |L(W, V + u v^T, theta) - L(W, V, theta)| with unit u in Null(W)
/// and Gaussian v of scale 0.1. Requires rank(W) < d_y.
inline double null_space_perturb_check(const DataSet& data, const ResNetParams& params, const StackConfig& cfg,
                                       LossKind kind, Index trials, std::uint64_t seed) {
    check_problem(data, params, cfg);
    validate_targets(kind, data.Y);
    if (numerical_rank(params.W) >= params.d_y())
        throw PreconditionError("null_space_perturb_check: W has full row rank");
    const Matrix N = null_space_basis(params.W);
    if (N.cols() == 0) throw PreconditionError("null_space_perturb_check: Null(W) is numerically trivial");
    Rng rng(seed);
    double worst = 0.0;
    for (Index t = 0; t < trials; ++t) {
        Vector u = N * rng.unit_vector(N.cols());
        u.normalize();
        const Vector v = rng.gaussian_matrix(params.d_z(), 1, 0.1);
        worst = std::max(worst, null_space_perturbation_deviation(data, params, cfg, kind, u, v));
    }
    return worst;
}

struct DeadReluCounterexample {
    Matrix W1;  // hidden x d_x
    Matrix W2;  // d_y x hidden
    double local_value = 0.0;   // (1/m) sum_i ||y_i||^2
    double oracle_value = 0.0;  // L*_x
    double separation = 0.0;    // local_value - oracle_value
    double radius = 0.0;        // 0.1 c / max_i ||x_i||
    CertificationResult certification;
};

/// One-hidden-layer ReLU net whose hidden units are all dead on the data
/// (every pre-activation below -c), under squared loss. Each row of W1 is a
/// random unit direction w with w.x_i of one sign for all i, flipped to
/// negative and scaled by 2c / min_i |w.x_i|.
inline DeadReluCounterexample build_dead_relu_counterexample(const DataSet& data, double c, std::uint64_t seed,
                                                             Index hidden = 0, int max_attempts = 10000) {
    data.validate();
    if (!(c > 0.0)) throw InvalidInput("counterexample: c must be positive");
    const Index m = data.m();
    const Index dx = data.d_x();
    if (hidden <= 0) hidden = dx;

    DeadReluCounterexample out;
    out.local_value = data.Y.squaredNorm() / static_cast<double>(m);
    out.oracle_value = sq_oracle_x(data.X, data.Y);
    if (!(out.local_value > out.oracle_value))
        throw ConstructionInfeasible("counterexample: mean loss at zero output does not exceed L*_x");

    Rng rng(seed);
    out.W1.resize(hidden, dx);
    for (Index k = 0; k < hidden; ++k) {
        bool found = false;
        for (int attempt = 0; attempt < max_attempts && !found; ++attempt) {
            Vector w = rng.unit_vector(dx);
            const Vector s = data.X * w;
            const double smin = s.cwiseAbs().minCoeff();
            if (!(smin > 0.0)) continue;
            if ((s.array() > 0.0).all()) w = -w;
            else if (!(s.array() < 0.0).all()) continue;
            out.W1.row(k) = (2.0 * c / smin) * w.transpose();
            found = true;
        }
        if (!found) throw ConstructionInfeasible("counterexample: no direction puts every example on one side");
    }
    out.W2 = rng.gaussian_matrix(data.d_y(), hidden);

    double xmax = data.X.rowwise().norm().maxCoeff();
    if (!(xmax > 0.0)) throw ConstructionInfeasible("counterexample: all inputs are zero");
    out.radius = 0.1 * c / xmax;
    out.separation = out.local_value - out.oracle_value;

    const Index n1 = out.W1.size();
    const Matrix W1 = out.W1, W2 = out.W2;
    ObjectiveFn f = [&](const Vector& flat) {
        const Matrix a = unvec(flat.head(n1), W1.rows(), W1.cols());
        const Matrix b = unvec(flat.tail(flat.size() - n1), W2.rows(), W2.cols());
        return (plain_relu_net_predict_batch(data.X, a, b) - data.Y).squaredNorm() / static_cast<double>(m);
    };
    Vector x0(n1 + W2.size());
    x0 << vec(W1), vec(W2);
    CertificationConfig cert;
    cert.radii = {10.0 * out.radius, out.radius};
    cert.hessian_step_value_only = 0.01 * out.radius;
    out.certification = certify_point(f, {}, x0, cert, Rng::derive(seed, 1));
    return out;
}

}  // namespace reslab
