#include <gtest/gtest.h>

#include "reslab/losses.hpp"
#include "reslab/rng.hpp"
#include "support.hpp"

using namespace reslab;

namespace {

RowVector row(std::initializer_list<double> v) {
    RowVector r(static_cast<Index>(v.size()));
    Index k = 0;
    for (double x : v) r(k++) = x;
    return r;
}

const LossKind kAll[] = {LossKind::squared, LossKind::logistic_binary, LossKind::softmax_cross_entropy,
                         LossKind::smoothed_hinge};

}  // namespace

TEST(Loss, SquaredHandValues) {
    const LossEval e = loss_eval(LossKind::squared, row({1, 2}), row({0, 0}));
    EXPECT_DOUBLE_EQ(e.value, 5.0);
    EXPECT_EQ(e.D, row({2, 4}));
}

TEST(Loss, LogisticAtZero) {
    const LossEval e = loss_eval(LossKind::logistic_binary, row({0}), row({1}));
    EXPECT_NEAR(e.value, std::log(2.0), 1e-15);
    EXPECT_NEAR(e.D(0), -0.5, 1e-15);
}

TEST(Loss, SoftmaxUniform) {
    const LossEval e = loss_eval(LossKind::softmax_cross_entropy, row({0, 0, 0}), row({0, 1, 0}));
    EXPECT_NEAR(e.value, std::log(3.0), 1e-15);
    EXPECT_NEAR(e.D.sum(), 0.0, 1e-15);
}

TEST(Loss, SoftmaxLargeLogitsStayFinite) {
    const LossEval e = loss_eval(LossKind::softmax_cross_entropy, row({1000, -1000}), row({0, 1}));
    EXPECT_NEAR(e.value, 2000.0, 1e-9);
    EXPECT_TRUE(e.D.allFinite());
}

TEST(Loss, SmoothedHingePieces) {
    EXPECT_DOUBLE_EQ(loss_eval(LossKind::smoothed_hinge, row({2}), row({1})).value, 0.0);
    EXPECT_DOUBLE_EQ(loss_eval(LossKind::smoothed_hinge, row({0.5}), row({1})).value, 0.125);
    EXPECT_DOUBLE_EQ(loss_eval(LossKind::smoothed_hinge, row({-1}), row({1})).value, 1.5);
    EXPECT_DOUBLE_EQ(loss_eval(LossKind::smoothed_hinge, row({0}), row({-1})).value, 0.5);
}

TEST(Loss, MatchesReferenceAndFiniteDifferences) {
    Rng rng(1);
    for (LossKind kind : kAll) {
        for (int t = 0; t < 50; ++t) {
            const Index k = kind == LossKind::logistic_binary ? 1 : 3;
            const RowVector h = rng.gaussian_matrix(1, k, 2.0);
            const RowVector y = reftest::labels_for(kind, rng.gaussian_matrix(1, k));
            const LossEval e = loss_eval(kind, h, y);
            EXPECT_NEAR(e.value, reftest::ref_loss(kind, h, y), 1e-12 * (1 + e.value));
            const Vector fd = reftest::fd_gradient(
                [&](const Vector& v) { return reftest::ref_loss(kind, v.transpose(), y); }, h.transpose());
            EXPECT_LT((e.D.transpose() - fd).norm(), 1e-6) << to_string(kind);
        }
    }
}

TEST(Loss, ConvexAlongChords) {
    Rng rng(2);
    for (LossKind kind : kAll) {
        for (int t = 0; t < 200; ++t) {
            const Index k = kind == LossKind::logistic_binary ? 1 : 2;
            const RowVector y = reftest::labels_for(kind, rng.gaussian_matrix(1, k));
            const double probe = convexity_probe(kind, y, rng.gaussian_matrix(1, k, 3.0), rng.gaussian_matrix(1, k, 3.0),
                                                 rng.uniform());
            EXPECT_LE(probe, 1e-12);
        }
    }
}

TEST(Loss, TargetValidation) {
    EXPECT_THROW(loss_eval(LossKind::logistic_binary, row({0}), row({0.5})), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::logistic_binary, row({0, 0}), row({1, 0})), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::softmax_cross_entropy, row({0, 0}), row({1, 1})), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::softmax_cross_entropy, row({0, 0}), row({0, 0})), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::smoothed_hinge, row({0}), row({0})), InvalidInput);
    EXPECT_THROW(loss_eval(LossKind::squared, row({0}), row({0, 1})), ShapeError);
    EXPECT_THROW(loss_eval(LossKind::squared, row({std::nan("")}), row({0})), InvalidInput);
}

TEST(Loss, MeanLossMatchesPerExample) {
    Rng rng(3);
    for (LossKind kind : kAll) {
        const Index k = kind == LossKind::logistic_binary ? 1 : 3;
        const Matrix H = rng.gaussian_matrix(7, k);
        const Matrix Y = reftest::labels_for(kind, rng.gaussian_matrix(7, k));
        Matrix D;
        const double v = mean_loss(kind, H, Y, &D);
        double total = 0.0;
        for (Index i = 0; i < 7; ++i) {
            const LossEval e = loss_eval(kind, H.row(i), Y.row(i));
            total += e.value;
            EXPECT_LT((D.row(i) - e.D).norm(), 1e-14);
        }
        EXPECT_NEAR(v, total / 7, 1e-14);
    }
}

TEST(Loss, NameRoundTrip) {
    for (LossKind kind : kAll) EXPECT_EQ(parse_loss_kind(to_string(kind)), kind);
    EXPECT_THROW(parse_loss_kind("hinge"), ConfigError);
}
