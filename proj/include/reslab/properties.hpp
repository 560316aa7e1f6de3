#pragma once

// Self-check suite behind `resnet_lab check`: randomized instances of the
// projection identities, oracle agreement, gradient correctness, the
// everywhere lower bound, linear-stack nullity, null-space invariance and the
// dead-ReLU construction.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "reslab/landscape.hpp"
#include "reslab/objective.hpp"
#include "reslab/oracle.hpp"
#include "reslab/projkit.hpp"
#include "reslab/rng.hpp"

namespace reslab {

struct PropertyOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline std::string fmt_worst(const char* label, double v) {
    std::ostringstream s;
    s.precision(3);
    s << label << "=" << std::scientific << v;
    return s.str();
}

/// Random small architecture for d_x inputs.
inline StackConfig random_stack(Rng& rng, Index d_x, Activation act) {
    StackConfig c;
    c.depth = static_cast<std::size_t>(rng.below(4));
    c.activation = act;
    c.use_skip = c.depth > 0 && rng.uniform() < 0.5;
    c.append_bias_unit = c.depth > 0 && rng.uniform() < 0.3;
    const Index w = 1 + static_cast<Index>(rng.below(4));
    for (std::size_t l = 0; l < c.depth; ++l) c.widths.push_back(c.use_skip ? w : 1 + static_cast<Index>(rng.below(4)));
    c.d_z = c.depth > 0 ? c.widths.back() + (c.append_bias_unit ? 1 : 0) : 1 + static_cast<Index>(rng.below(3));
    (void)d_x;
    return c;
}

inline ResNetParams random_params(Rng& rng, const StackConfig& cfg, Index d_x, Index d_y, double scale) {
    ResNetParams p;
    p.W = rng.gaussian_matrix(d_y, d_x, scale);
    p.V = rng.gaussian_matrix(d_x, cfg.d_z, scale);
    for (const auto& [r, c] : cfg.layer_shapes(d_x)) p.theta.push_back(rng.gaussian_matrix(r, c, scale));
    return p;
}

}  // namespace detail

/// Runs every check; `scale` multiplies the number of random instances.
inline std::vector<PropertyOutcome> run_property_suite(std::uint64_t seed, double scale = 1.0) {
    auto count = [&](int n) { return std::max(1, static_cast<int>(std::lround(n * scale))); };
    std::vector<PropertyOutcome> out;

    {  // projector algebra
        Rng rng(Rng::derive(seed, 1));
        double worst_proj = 0.0, worst_block = 0.0, worst_trace = 0.0, worst_alt = 0.0;
        for (int t = 0; t < count(1000); ++t) {
            const Index m = 1 + static_cast<Index>(rng.below(32));
            const Index dx = 1 + static_cast<Index>(rng.below(16));
            const Index dz = 1 + static_cast<Index>(rng.below(16));
            const Index dy = 1 + static_cast<Index>(rng.below(4));
            const Matrix X = rng.gaussian_matrix(m, dx), Z = rng.gaussian_matrix(m, dz), Y = rng.gaussian_matrix(m, dy);
            const Matrix P = col_projector(hconcat(X, Z)).matrix;
            worst_proj = std::max({worst_proj, (P * P - P).norm(), (P - P.transpose()).norm()});
            worst_block = std::max(worst_block, block_projection_identity_check(X, Z));
            worst_trace = std::max(worst_trace, trace_identity_residual(X, Z, Y));
            worst_alt = std::max(worst_alt, std::abs(improvement_alt_form(X, Z, Y) - sq_oracle_xz(X, Z, Y).improvement));
        }
        out.push_back({"projector_algebra",
                       worst_proj < 1e-10 && worst_block < 1e-9 && worst_trace < 1e-9 && worst_alt < 1e-9,
                       detail::fmt_worst("proj", worst_proj) + " " + detail::fmt_worst("block", worst_block) + " " +
                           detail::fmt_worst("trace", worst_trace) + " " + detail::fmt_worst("alt", worst_alt)});
    }

    {  // closed form against the normal equations
        Rng rng(Rng::derive(seed, 2));
        double worst = 0.0;
        for (int t = 0; t < count(500); ++t) {
            const Index m = 2 + static_cast<Index>(rng.below(31));
            const Matrix X = rng.gaussian_matrix(m, 1 + static_cast<Index>(rng.below(8)));
            const Matrix Z = rng.gaussian_matrix(m, 1 + static_cast<Index>(rng.below(8)));
            const Matrix Y = rng.gaussian_matrix(m, 1 + static_cast<Index>(rng.below(3)));
            const double a = sq_oracle_xz(X, Z, Y).l_star_xz;
            const double b = lstsq_normal_equations(X, Z, Y);
            worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
        }
        out.push_back({"oracle_normal_equations", worst < 1e-9, detail::fmt_worst("rel", worst)});
    }

    {  // analytic gradient against central differences
        Rng rng(Rng::derive(seed, 3));
        double worst = 0.0;
        const LossKind kinds[] = {LossKind::squared, LossKind::logistic_binary, LossKind::softmax_cross_entropy,
                                  LossKind::smoothed_hinge};
        for (LossKind kind : kinds) {
            for (int t = 0; t < count(20); ++t) {
                const Index dx = 2 + static_cast<Index>(rng.below(3));
                const Index dy = kind == LossKind::logistic_binary ? 1 : 1 + static_cast<Index>(rng.below(2));
                StackConfig cfg = detail::random_stack(rng, dx, Activation::tanh);
                const Index m = 3 + static_cast<Index>(rng.below(5));
                DataSet d;
                d.X = rng.gaussian_matrix(m, dx);
                Matrix S = rng.gaussian_matrix(m, dy);
                d.Y = Matrix::Zero(m, dy);
                for (Index i = 0; i < m; ++i) {
                    Index k = 0;
                    S.row(i).maxCoeff(&k);
                    for (Index j = 0; j < dy; ++j) {
                        if (kind == LossKind::squared) d.Y(i, j) = S(i, j);
                        else if (kind == LossKind::logistic_binary) d.Y(i, j) = S(i, j) > 0 ? 1.0 : 0.0;
                        else if (kind == LossKind::smoothed_hinge) d.Y(i, j) = S(i, j) > 0 ? 1.0 : -1.0;
                        else d.Y(i, j) = j == k ? 1.0 : 0.0;
                    }
                }
                const ResNetParams p = detail::random_params(rng, cfg, dx, dy, 0.5);
                const Vector g = grad_loss_params(d, p, cfg, kind).flatten();
                Vector x = p.flatten();
                Vector fd(x.size());
                const double h = 1e-6;
                for (Index j = 0; j < x.size(); ++j) {
                    const double x0 = x(j);
                    x(j) = x0 + h;
                    const double fp = empirical_objective(d, p.unflatten(x), cfg, kind);
                    x(j) = x0 - h;
                    const double fm = empirical_objective(d, p.unflatten(x), cfg, kind);
                    x(j) = x0;
                    fd(j) = (fp - fm) / (2.0 * h);
                }
                worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
            }
        }
        out.push_back({"gradient_check", worst < 1e-5, detail::fmt_worst("rel", worst)});
    }

    {  // L >= L*_xz at arbitrary parameters
        Rng rng(Rng::derive(seed, 4));
        double worst = std::numeric_limits<double>::infinity();
        for (int t = 0; t < count(1000); ++t) {
            const Index dx = 1 + static_cast<Index>(rng.below(5));
            const Activation act = rng.uniform() < 0.5 ? Activation::relu : Activation::tanh;
            const StackConfig cfg = detail::random_stack(rng, dx, act);
            const Index m = 1 + static_cast<Index>(rng.below(24));
            const Index dy = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min(dx, cfg.d_z))));
            DataSet d;
            d.X = rng.gaussian_matrix(m, dx);
            d.Y = rng.gaussian_matrix(m, dy);
            const ResNetParams p = detail::random_params(rng, cfg, dx, dy, 1.0);
            worst = std::min(worst, verify_theorem(d, p, cfg, LossKind::squared).gap);
        }
        out.push_back({"everywhere_lower_bound", worst >= -1e-9, detail::fmt_worst("min_gap", worst)});
    }

    {  // identity stacks add nothing beyond col(X)
        Rng rng(Rng::derive(seed, 5));
        double worst = 0.0;
        for (int t = 0; t < count(100); ++t) {
            const Index dx = 1 + static_cast<Index>(rng.below(5));
            StackConfig cfg = detail::random_stack(rng, dx, Activation::identity);
            if (cfg.append_bias_unit) {
                cfg.append_bias_unit = false;
                if (cfg.depth > 0) cfg.d_z = cfg.widths.back();
            }
            const Index m = 1 + static_cast<Index>(rng.below(32));
            const Matrix X = rng.gaussian_matrix(m, dx), Y = rng.gaussian_matrix(m, 2);
            const ResNetParams p = detail::random_params(rng, cfg, dx, 1, 1.0);
            const Matrix Z = residual_matrix(X, p.theta, cfg);
            worst = std::max(worst, sq_oracle_xz(X, Z, Y).improvement / std::max(Y.squaredNorm(), 1e-300));
        }
        out.push_back({"linear_stack_nullity", worst < 1e-9, detail::fmt_worst("rel_improvement", worst)});
    }

    {  // L invariant under V -> V + u v^T with W u = 0
        Rng rng(Rng::derive(seed, 6));
        double worst = 0.0;
        for (int t = 0; t < count(100); ++t) {
            const Index dx = 3 + static_cast<Index>(rng.below(3));
            StackConfig cfg;
            cfg.depth = 1;
            cfg.widths = {dx};
            cfg.d_z = dx;
            cfg.activation = Activation::tanh;
            const Index dy = 2 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(dx - 1)));
            DataSet d;
            d.X = rng.gaussian_matrix(10, dx);
            d.Y = rng.gaussian_matrix(10, dy);
            ResNetParams p = detail::random_params(rng, cfg, dx, dy, 1.0);
            p.W = rng.gaussian_matrix(dy, 1) * rng.gaussian_matrix(1, dx);  // rank one
            const double L = empirical_objective(d, p, cfg, LossKind::squared);
            const double dev = null_space_perturb_check(d, p, cfg, LossKind::squared, 5, rng.next_u64());
            worst = std::max(worst, dev / (1.0 + std::abs(L)));
        }
        out.push_back({"null_space_invariance", worst <= 1e-12, detail::fmt_worst("rel_dev", worst)});
    }

    {  // dead-ReLU construction
        bool ok = true;
        DataSet hand;
        hand.X = Matrix::Ones(1, 1);
        hand.Y = Matrix::Ones(1, 1);
        const DeadReluCounterexample h = build_dead_relu_counterexample(hand, 0.5, seed);
        ok = ok && std::abs(h.separation - 1.0) <= 1e-12 && h.certification.verdict == Verdict::certified_local_min;
        Rng rng(Rng::derive(seed, 7));
        double min_sep = std::numeric_limits<double>::infinity();
        for (int t = 0; t < count(10); ++t) {
            DataSet d;
            const Index m = 8 + static_cast<Index>(rng.below(8)), dx = 2 + static_cast<Index>(rng.below(2));
            d.X = rng.gaussian_matrix(m, dx);
            d.X.col(0) = d.X.col(0).cwiseAbs().array() + 0.1;  // all inputs on one side of a hyperplane
            d.Y = rng.gaussian_matrix(m, 1);
            const DeadReluCounterexample ce = build_dead_relu_counterexample(d, 0.5, rng.next_u64());
            min_sep = std::min(min_sep, ce.separation);
            ok = ok && ce.separation > 0.0 && ce.certification.verdict == Verdict::certified_local_min;
        }
        out.push_back({"dead_relu_counterexample", ok, detail::fmt_worst("min_separation", min_sep)});
    }

    {  // convex solver against the closed form
        Rng rng(Rng::derive(seed, 8));
        double worst = 0.0;
        for (int t = 0; t < count(10); ++t) {
            const Index m = 10 + static_cast<Index>(rng.below(20));
            DataSet d;
            d.X = rng.gaussian_matrix(m, 3);
            d.Y = rng.gaussian_matrix(m, 2);
            const Matrix Z = rng.gaussian_matrix(m, 2);
            const double a = convex_oracle_xz(d, Z, LossKind::squared, 1e-10).objective;
            worst = std::max(worst, std::abs(a - sq_oracle_xz(d.X, Z, d.Y).l_star_xz));
        }
        out.push_back({"convex_oracle_squared", worst <= 1e-6, detail::fmt_worst("abs", worst)});
    }

    return out;
}

}  // namespace reslab
