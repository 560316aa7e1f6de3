#pragma once

// Monotone line-search descent on a flat parameter vector.
//
// Directions are either the negative gradient or an L-BFGS two-loop direction.
// Every step satisfies the Armijo condition f(x + a d) <= f(x) + c a g.d, so
// the accepted values never increase.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "reslab/errors.hpp"
#include "reslab/projkit.hpp"

namespace reslab {

enum class DescentMethod { gradient_descent, lbfgs };

inline std::string_view to_string(DescentMethod m) {
    return m == DescentMethod::lbfgs ? "lbfgs" : "gradient_descent";
}

inline DescentMethod parse_descent_method(std::string_view s) {
    if (s == "lbfgs") return DescentMethod::lbfgs;
    if (s == "gradient_descent" || s == "gd") return DescentMethod::gradient_descent;
    throw ConfigError("unknown descent method '" + std::string(s) + "'");
}

struct TraceEntry {
    long iteration = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
};

struct DescentOptions {
    DescentMethod method = DescentMethod::lbfgs;
    long max_iter = 200000;
    double grad_tol = 1e-8;
    double armijo_slope = 1e-4;
    double shrink = 0.5;
    int memory = 10;
    /// Gradient descent only: start each line search at twice the last accepted
    /// step instead of at 1.0.
    bool warm_start_step = false;
    /// Record every k-th iteration (first and last always kept); 0 disables the trace.
    long trace_stride = 1;
};

struct DescentResult {
    Vector x;
    double value = 0.0;
    Vector grad;
    double grad_norm = 0.0;
    long iterations = 0;
    bool stalled = false;  // neither Armijo nor the derivative bisection makes progress
    std::vector<TraceEntry> trace;
};

/// `value(x)` returns f(x) (non-finite allowed, treated as rejection);
/// `value_grad(x, g)` returns f(x) and writes the gradient into g.
template <class ValueFn, class ValueGradFn>
DescentResult minimize(Vector x, ValueFn&& value, ValueGradFn&& value_grad, const DescentOptions& opts) {
    DescentResult out;
    Vector g;
    double f = value_grad(x, g);
    if (!std::isfinite(f)) throw NumericalError("minimize: non-finite objective at the starting point");
    double gnorm = g.norm();
    if (opts.trace_stride > 0) out.trace.push_back({0, f, gnorm});

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    double gd_step = 0.5;
    double best_gnorm = gnorm;
    int flat_steps = 0;
    long it = 0;
    Vector d, trial, g_new;
    // Near a sharp minimum f stops resolving Armijo decreases before |g| reaches
    // tolerance. Take Newton steps on a differenced Hessian instead and keep
    // them while |g| drops and f does not rise beyond rounding.
    auto polish = [&]() {
        const Index n = x.size();
        const double slack = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
        Vector xp = x, gp = g, gt, ga, gb;
        double fp = f, gpn = gnorm;
        bool moved = false;
        for (int round = 0; round < 20 && gpn > opts.grad_tol; ++round) {
            Matrix H(n, n);
            for (Index i = 0; i < n; ++i) {
                const double h = 1e-6 * (1.0 + std::abs(xp(i)));
                Vector e = Vector::Zero(n);
                e(i) = h;
                value_grad(xp + e, ga);
                value_grad(xp - e, gb);
                H.col(i) = (ga - gb) / (2.0 * h);
            }
            H = 0.5 * (H + H.transpose()).eval();
            if (!H.allFinite()) break;
            const Vector step = Eigen::CompleteOrthogonalDecomposition<Matrix>(H).solve(gp);
            bool ok = false;
            for (double t = 1.0; t > 1e-10; t *= 0.5) {
                const Vector xt = xp - t * step;
                const double ft = value_grad(xt, gt);
                if (std::isfinite(ft) && ft <= fp + slack && gt.norm() < gpn) {
                    xp = xt;
                    gp = gt;
                    fp = ft;
                    gpn = gt.norm();
                    ok = moved = true;
                    break;
                }
            }
            if (!ok) break;
        }
        if (moved) trial = xp;
        return moved;
    };
    while (gnorm > opts.grad_tol && it < opts.max_iter) {
        if (opts.method == DescentMethod::lbfgs && !s_hist.empty()) {
            Vector q = g;
            std::vector<double> alpha(s_hist.size());
            for (std::size_t k = s_hist.size(); k-- > 0;) {
                alpha[k] = rho_hist[k] * s_hist[k].dot(q);
                q -= alpha[k] * y_hist[k];
            }
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
            for (std::size_t k = 0; k < s_hist.size(); ++k) {
                const double beta = rho_hist[k] * y_hist[k].dot(q);
                q += (alpha[k] - beta) * s_hist[k];
            }
            d = -q;
        } else {
            d = -g;
        }
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g;
            slope = -gnorm * gnorm;
        }

        double step = 1.0;
        if (opts.method == DescentMethod::gradient_descent && opts.warm_start_step) step = std::min(gd_step * 2.0, 1e12);
        bool accepted = false;
        double f_new = 0.0;
        for (;;) {
            while (step > 1e-20) {
                trial = x + step * d;
                const double ft = value(trial);
                if (std::isfinite(ft) && ft <= f + opts.armijo_slope * step * slope) {
                    accepted = true;
                    break;
                }
                step *= opts.shrink;
            }
            if (accepted || s_hist.empty()) break;
            // quasi-Newton direction failed: drop the memory, retry along -g
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g;
            slope = -gnorm * gnorm;
            step = 1.0;
        }
        if (!accepted && !polish()) {
            out.stalled = true;
            break;
        }
        if (accepted) gd_step = step;
        f_new = value_grad(trial, g_new);
        if (!std::isfinite(f_new)) throw NumericalError("minimize: objective diverged");
        if (opts.method == DescentMethod::lbfgs) {
            Vector s = trial - x;
            Vector y = g_new - g;
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                s_hist.push_back(std::move(s));
                y_hist.push_back(std::move(y));
                rho_hist.push_back(1.0 / sy);
                if (static_cast<int>(s_hist.size()) > opts.memory) {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho_hist.pop_front();
                }
            }
        }
        // Steps lost in rounding: f does not move and |g| makes no new low.
        double gnorm_new = g_new.norm();
        if (f_new < f || gnorm_new < best_gnorm) {
            flat_steps = 0;
        } else if (++flat_steps > 50) {
            // f is flat to rounding
            if (!polish()) {
                out.stalled = true;
                break;
            }
            flat_steps = 0;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            f_new = value_grad(trial, g_new);
            if (!std::isfinite(f_new)) throw NumericalError("minimize: objective diverged");
        }
        gnorm_new = g_new.norm();
        best_gnorm = std::min(best_gnorm, gnorm_new);
        x.swap(trial);
        g.swap(g_new);
        f = f_new;
        gnorm = gnorm_new;
        ++it;
        if (opts.trace_stride > 0 && it % opts.trace_stride == 0) out.trace.push_back({it, f, gnorm});
    }
    if (opts.trace_stride > 0 && out.trace.back().iteration != it) out.trace.push_back({it, f, gnorm});
    out.x = std::move(x);
    out.value = f;
    out.grad = std::move(g);
    out.grad_norm = gnorm;
    out.iterations = it;
    return out;
}

}  // namespace reslab
