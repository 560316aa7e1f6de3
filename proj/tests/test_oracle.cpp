#include <gtest/gtest.h>

#include "reslab/model.hpp"
#include "reslab/objective.hpp"
#include "reslab/oracle.hpp"
#include "reslab/rng.hpp"
#include "support.hpp"

using namespace reslab;

namespace {

Matrix col(std::initializer_list<double> v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

}  // namespace

TEST(SqOracle, HandInstanceX) {
    // X = (1, 0), Y = (0, 1): the second example is unexplained.
    EXPECT_DOUBLE_EQ(sq_oracle_x(col({1, 0}), col({0, 1})), 0.5);
}

TEST(SqOracle, HandInstanceXZ) {
    const OracleResult r = sq_oracle_xz(col({1, 0}), col({0, 1}), col({0, 1}));
    EXPECT_NEAR(r.l_star_x, 0.5, 1e-15);
    EXPECT_NEAR(r.improvement, 0.5, 1e-15);
    EXPECT_NEAR(r.l_star_xz, 0.0, 1e-15);
    EXPECT_NEAR(improvement_alt_form(col({1, 0}), col({0, 1}), col({0, 1})), 0.5, 1e-15);
}

TEST(SqOracle, ZeroZ) {
    Rng rng(1);
    const Matrix X = rng.gaussian_matrix(10, 3), Y = rng.gaussian_matrix(10, 2);
    const OracleResult r = sq_oracle_xz(X, Matrix::Zero(10, 2), Y);
    EXPECT_EQ(r.improvement, 0.0);
    EXPECT_EQ(r.l_star_xz, r.l_star_x);
}

TEST(SqOracle, ZeroWhenXSpansEverything) {
    Rng rng(2);
    EXPECT_LT(sq_oracle_x(rng.gaussian_matrix(3, 3), rng.gaussian_matrix(3, 2)), 1e-28);
    EXPECT_LT(sq_oracle_x(rng.gaussian_matrix(2, 5), rng.gaussian_matrix(2, 1)), 1e-28);
}

TEST(SqOracle, MatchesIndependentLeastSquares) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const Index m = 1 + static_cast<Index>(rng.below(30));
        const Matrix X = rng.gaussian_matrix(m, 1 + static_cast<Index>(rng.below(6)));
        const Matrix Z = rng.gaussian_matrix(m, 1 + static_cast<Index>(rng.below(6)));
        const Matrix Y = rng.gaussian_matrix(m, 1 + static_cast<Index>(rng.below(3)));
        const OracleResult r = sq_oracle_xz(X, Z, Y);
        const double ref_x = reftest::cod_lstsq_min(X, Y);
        const double ref_xz = reftest::cod_lstsq_min(reftest::hcat(X, Z), Y);
        EXPECT_NEAR(r.l_star_x, ref_x, 1e-9 * std::max(1.0, ref_x));
        EXPECT_NEAR(r.l_star_xz, ref_xz, 1e-9 * std::max(1.0, ref_xz));
        EXPECT_NEAR(lstsq_normal_equations(X, Z, Y), ref_xz, 1e-9 * std::max(1.0, ref_xz));
        EXPECT_GE(r.improvement, -1e-10);
        EXPECT_NEAR(improvement_alt_form(X, Z, Y), r.improvement, 1e-9);
    }
}

TEST(SqOracle, ZInsideColumnSpaceGivesNoImprovement) {
    Rng rng(4);
    const Matrix X = rng.gaussian_matrix(12, 3), Y = rng.gaussian_matrix(12, 2);
    const Matrix Z = X * rng.gaussian_matrix(3, 4);
    EXPECT_LT(improvement_alt_form(X, Z, Y), 1e-12);
    EXPECT_LT(sq_oracle_xz(X, Z, Y).improvement, 1e-12);
}

TEST(SqOracle, ShapeAndFiniteErrors) {
    EXPECT_THROW(sq_oracle_x(Matrix::Ones(3, 1), Matrix::Ones(2, 1)), ShapeError);
    EXPECT_THROW(sq_oracle_xz(Matrix::Ones(3, 1), Matrix::Ones(2, 1), Matrix::Ones(3, 1)), ShapeError);
    EXPECT_THROW(improvement_alt_form(Matrix::Ones(3, 1), Matrix::Ones(3, 1), Matrix::Ones(4, 1)), ShapeError);
    Matrix bad = Matrix::Ones(3, 1);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(sq_oracle_x(bad, Matrix::Ones(3, 1)), InvalidInput);
}

TEST(ConvexOracle, SquaredAgreesWithClosedForm) {
    Rng rng(5);
    for (int t = 0; t < 10; ++t) {
        DataSet d;
        d.X = rng.gaussian_matrix(20, 3);
        d.Y = rng.gaussian_matrix(20, 2);
        const Matrix Z = rng.gaussian_matrix(20, 2);
        const LinearModelFit f = convex_oracle_xz(d, Z, LossKind::squared, 1e-10);
        EXPECT_NEAR(f.objective, sq_oracle_xz(d.X, Z, d.Y).l_star_xz, 1e-6);
        EXPECT_LE(f.grad_norm, 1e-10);
        EXPECT_NEAR(linear_model_objective(d, Z, LossKind::squared, f.R1, f.R2), f.objective, 1e-12);
    }
}

TEST(ConvexOracle, GradientDescentVariantAgrees) {
    Rng rng(6);
    DataSet d;
    d.X = rng.gaussian_matrix(15, 2);
    d.Y = rng.gaussian_matrix(15, 1);
    const Matrix Z = rng.gaussian_matrix(15, 1);
    ConvexSolverOptions o;
    o.method = DescentMethod::gradient_descent;
    const LinearModelFit f = convex_oracle_xz(d, Z, LossKind::squared, 1e-9, o);
    EXPECT_NEAR(f.objective, sq_oracle_xz(d.X, Z, d.Y).l_star_xz, 1e-6);
}

TEST(ConvexOracle, EmptyZReducesToLinearProblem) {
    Rng rng(7);
    DataSet d;
    d.X = rng.gaussian_matrix(12, 3);
    d.Y = rng.gaussian_matrix(12, 1);
    const LinearModelFit f = convex_oracle_xz(d, Matrix(12, 0), LossKind::squared, 1e-10);
    EXPECT_EQ(f.R2.cols(), 0);
    EXPECT_NEAR(f.objective, sq_oracle_x(d.X, d.Y), 1e-9);
}

TEST(ConvexOracle, RealizableTargetsReachZero) {
    Rng rng(8);
    DataSet d;
    d.X = rng.gaussian_matrix(10, 2);
    const Matrix Z = rng.gaussian_matrix(10, 1);
    d.Y = d.X * rng.gaussian_matrix(2, 1) + Z * 0.5;
    const LinearModelFit f = convex_oracle_xz(d, Z, LossKind::squared, 1e-9);
    EXPECT_LE(f.objective, 1e-9);
}

TEST(ConvexOracle, SeparableLogisticDrivesLossToZero) {
    // No attained minimum: either the budget runs out or the gradient
    // underflows with the weights far out along the separating direction.
    DataSet d;
    d.X = col({1, 2, -1, -2});
    d.Y = col({1, 1, 0, 0});
    ConvexSolverOptions o;
    o.max_iter = 2000;
    LinearModelFit f;
    try {
        f = convex_oracle_xz(d, Matrix(4, 0), LossKind::logistic_binary, 1e-12, o);
    } catch (const ConvergenceError& e) {
        f = e.best();
    }
    EXPECT_LT(f.objective, 1e-3);
    EXPECT_GT(f.R1(0, 0), 3.0);
}

TEST(ConvexOracle, CrossEntropyIsStationaryAndBelowAnyLinearPoint) {
    Rng rng(9);
    DataSet d;
    d.X = rng.gaussian_matrix(40, 3);
    d.Y = reftest::labels_for(LossKind::softmax_cross_entropy, rng.gaussian_matrix(40, 3));  // random labels
    const Matrix Z = rng.gaussian_matrix(40, 2).array().tanh().matrix();
    const LinearModelFit f = convex_oracle_xz(d, Z, LossKind::softmax_cross_entropy, 1e-9);
    for (int t = 0; t < 50; ++t) {
        const Matrix R1 = f.R1 + rng.gaussian_matrix(3, 3, 0.1), R2 = f.R2 + rng.gaussian_matrix(3, 2, 0.1);
        EXPECT_GE(linear_model_objective(d, Z, LossKind::softmax_cross_entropy, R1, R2), f.objective - 1e-12);
    }
}

TEST(ConvexOracle, InputErrors) {
    DataSet d;
    d.X = Matrix::Ones(3, 1);
    d.Y = Matrix::Ones(3, 1);
    EXPECT_THROW(convex_oracle_xz(d, Matrix::Ones(2, 1), LossKind::squared, 1e-6), ShapeError);
    EXPECT_THROW(convex_oracle_xz(d, Matrix::Ones(3, 1), LossKind::squared, 0.0), InvalidInput);
    d.Y(0, 0) = 0.5;
    EXPECT_THROW(convex_oracle_xz(d, Matrix::Ones(3, 1), LossKind::logistic_binary, 1e-6), InvalidInput);
    ConvexSolverOptions o;
    o.initial = Matrix::Zero(2, 2);
    d.Y(0, 0) = 1;
    EXPECT_THROW(convex_oracle_xz(d, Matrix::Ones(3, 1), LossKind::squared, 1e-6, o), ShapeError);
}

TEST(OracleProperties, EverywhereLowerBound) {
    Rng rng(10);
    for (int t = 0; t < 200; ++t) {
        const StackConfig cfg = reftest::stack(static_cast<std::size_t>(rng.below(4)), 1 + static_cast<Index>(rng.below(3)),
                                               t % 2 ? Activation::relu : Activation::tanh, t % 3 == 0);
        const Index dx = 1 + static_cast<Index>(rng.below(4));
        DataSet d;
        d.X = rng.gaussian_matrix(12, dx);
        d.Y = rng.gaussian_matrix(12, 1);
        const ResNetParams p = reftest::random_params(rng, cfg, dx, 1);
        const Matrix Z = residual_matrix(d.X, p.theta, cfg);
        EXPECT_GE(empirical_objective(d, p, cfg, LossKind::squared), sq_oracle_xz(d.X, Z, d.Y).l_star_xz - 1e-9);
    }
}

TEST(OracleProperties, ZeroingZCoefficientsCannotBeatLStarX) {
    Rng rng(11);
    DataSet d;
    d.X = rng.gaussian_matrix(15, 2);
    d.Y = rng.gaussian_matrix(15, 1);
    const Matrix Z = rng.gaussian_matrix(15, 3);
    const LinearModelFit f = convex_oracle_xz(d, Z, LossKind::squared, 1e-10);
    EXPECT_GE(linear_model_objective(d, Z, LossKind::squared, f.R1, Matrix::Zero(1, 3)), sq_oracle_x(d.X, d.Y) - 1e-9);
}

TEST(OracleProperties, NonNegligibleThreshold) {
    OracleResult r;
    r.l_star_x = 100;
    r.improvement = 5e-7;
    EXPECT_FALSE(improvement_is_non_negligible(r));
    r.improvement = 2e-6;
    EXPECT_TRUE(improvement_is_non_negligible(r));
}
