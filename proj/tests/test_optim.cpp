#include <gtest/gtest.h>

#include "reslab/optim.hpp"

using namespace reslab;

namespace {

// f(x) = 0.5 x^T A x - b^T x with A = diag(1, 10, 100)
struct Quadratic {
    Vector diag = (Vector(3) << 1, 10, 100).finished();
    Vector b = (Vector(3) << 1, 1, 1).finished();
    double value(const Vector& x) const { return 0.5 * x.dot(diag.cwiseProduct(x)) - b.dot(x); }
    double value_grad(const Vector& x, Vector& g) const {
        g = diag.cwiseProduct(x) - b;
        return value(x);
    }
};

}  // namespace

TEST(Minimize, LbfgsSolvesQuadratic) {
    Quadratic q;
    DescentOptions o;
    o.grad_tol = 1e-10;
    const DescentResult r = minimize(
        Vector::Zero(3), [&](const Vector& x) { return q.value(x); },
        [&](const Vector& x, Vector& g) { return q.value_grad(x, g); }, o);
    EXPECT_LE(r.grad_norm, 1e-10);
    EXPECT_LT((r.x - q.b.cwiseQuotient(q.diag)).norm(), 1e-9);
    EXPECT_FALSE(r.stalled);
}

TEST(Minimize, GradientDescentTraceIsMonotone) {
    Quadratic q;
    DescentOptions o;
    o.method = DescentMethod::gradient_descent;
    o.grad_tol = 1e-8;
    const DescentResult r = minimize(
        Vector::Ones(3) * 3, [&](const Vector& x) { return q.value(x); },
        [&](const Vector& x, Vector& g) { return q.value_grad(x, g); }, o);
    EXPECT_LE(r.grad_norm, 1e-8);
    ASSERT_GE(r.trace.size(), 2u);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].loss, r.trace[i - 1].loss);
    EXPECT_EQ(r.trace.front().iteration, 0);
    EXPECT_EQ(r.trace.back().iteration, r.iterations);
}

TEST(Minimize, StartAtMinimumTakesNoSteps) {
    Quadratic q;
    const Vector xstar = q.b.cwiseQuotient(q.diag);
    const DescentResult r = minimize(
        xstar, [&](const Vector& x) { return q.value(x); },
        [&](const Vector& x, Vector& g) { return q.value_grad(x, g); }, DescentOptions{});
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(r.trace.size(), 1u);
}

TEST(Minimize, BudgetIsRespected) {
    Quadratic q;
    DescentOptions o;
    o.method = DescentMethod::gradient_descent;
    o.max_iter = 3;
    o.grad_tol = 1e-30;
    const DescentResult r = minimize(
        Vector::Ones(3), [&](const Vector& x) { return q.value(x); },
        [&](const Vector& x, Vector& g) { return q.value_grad(x, g); }, o);
    EXPECT_EQ(r.iterations, 3);
}

TEST(Minimize, TraceStrideKeepsEnds) {
    Quadratic q;
    DescentOptions o;
    o.method = DescentMethod::gradient_descent;
    o.trace_stride = 7;
    o.max_iter = 20;
    o.grad_tol = 1e-30;
    const DescentResult r = minimize(
        Vector::Ones(3), [&](const Vector& x) { return q.value(x); },
        [&](const Vector& x, Vector& g) { return q.value_grad(x, g); }, o);
    ASSERT_EQ(r.trace.size(), 4u);  // 0, 7, 14, 20
    EXPECT_EQ(r.trace[1].iteration, 7);
    EXPECT_EQ(r.trace.back().iteration, 20);
}

TEST(Minimize, NonFiniteStartThrows) {
    auto f = [](const Vector&) { return std::numeric_limits<double>::infinity(); };
    auto fg = [](const Vector& x, Vector& g) {
        g = x;
        return std::numeric_limits<double>::infinity();
    };
    EXPECT_THROW(minimize(Vector::Ones(2), f, fg, DescentOptions{}), NumericalError);
}

TEST(Minimize, KinkStallsInsteadOfLooping) {
    // |x| reported with the gradient of the wrong side: no Armijo step exists.
    auto f = [](const Vector& x) { return std::abs(x(0)); };
    auto fg = [](const Vector& x, Vector& g) {
        g = Vector::Constant(1, -1.0);
        return std::abs(x(0));
    };
    const DescentResult r = minimize(Vector::Zero(1), f, fg, DescentOptions{});
    EXPECT_TRUE(r.stalled);
    EXPECT_EQ(r.iterations, 0);
}

TEST(Minimize, MethodNames) {
    EXPECT_EQ(parse_descent_method("lbfgs"), DescentMethod::lbfgs);
    EXPECT_EQ(parse_descent_method("gd"), DescentMethod::gradient_descent);
    EXPECT_THROW(parse_descent_method("adam"), ConfigError);
}
