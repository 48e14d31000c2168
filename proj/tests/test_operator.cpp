#include <gtest/gtest.h>

#include "sqne/operator.hpp"
#include "sqne/verify.hpp"

using namespace sqne;

namespace {

// Rational branch of the scalar counterexample: sQNE but not a cutter.
OperatorHandle minus_half() {
    return OperatorHandle(1, [](ConstView x) { return Vector{-0.5 * x[0]}; }, {}, Vector{0.0}, "minus-half");
}

OperatorHandle identity(std::size_t n) {
    return OperatorHandle(n, [](ConstView x) { return Vector(x.begin(), x.end()); }, [](ConstView) { return true; });
}

}  // namespace

TEST(Relax, AlphaOneIsBitIdentical) {
    const auto P = halfspace_projection({1.0, -2.0}, 0.5);
    const auto R = relax(P, 1.0);
    for (const auto& x : sample_around(Vector{0.0, 0.0}, 5.0, 50, 3))
        EXPECT_EQ(R(x), P(x));
}

TEST(Relax, HalfspaceMidpoint) {
    const auto R = relax(halfspace_projection({1.0, 0.0}, 0.0), 0.5);
    const Vector y = R(Vector{2.0, 0.0});
    EXPECT_DOUBLE_EQ(y[0], 1.0);
    EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(Relax, MinusHalfAtOne) {
    EXPECT_DOUBLE_EQ(relax(minus_half(), 0.5)(Vector{1.0})[0], 0.25);
}

TEST(Relax, RejectsAlphaOutsideRange) {
    EXPECT_THROW(relax(minus_half(), 0.0), InvalidArgument);
    EXPECT_THROW(relax(minus_half(), 1.5), InvalidArgument);
}

TEST(Relax, PreservesSqne) {
    const auto P = ball_projection({1.0, 1.0, 0.0}, 2.0);
    const auto xs = sample_around(Vector{0.0, 0.0, 0.0}, 10.0, 200, 7);
    for (double a : {0.1, 0.5, 0.9, 1.0}) {
        const auto r = check_property(relax(P, a), OperatorProperty::SQNE, xs, {Vector{1.0, 1.0, 0.0}});
        EXPECT_TRUE(r.passed) << "alpha " << a;
    }
}

TEST(GeneralizedRelax, UnitIsIdenticalToT) {
    const auto P = halfspace_projection({1.0, 1.0}, 1.0);
    const auto G = generalized_relax(P, RelaxationSpec{1.0, ConstantStep{1.0}});
    for (const auto& x : sample_around(Vector{0.0, 0.0}, 4.0, 50, 11))
        EXPECT_EQ(G(x), P(x));
}

TEST(GeneralizedRelax, LambdaZeroIsIdentity) {
    const auto G = generalized_relax(halfspace_projection({1.0, 0.0}, 0.0), RelaxationSpec{0.0, ConstantStep{1.0}});
    EXPECT_EQ(G(Vector{2.0, -3.0}), (Vector{2.0, -3.0}));
}

TEST(GeneralizedRelax, SigmaTwoDoublesTheStep) {
    const auto G = generalized_relax(halfspace_projection({1.0, 0.0}, 0.0), RelaxationSpec{1.0, ConstantStep{2.0}});
    const Vector y = G(Vector{2.0, 0.0});
    EXPECT_DOUBLE_EQ(y[0], -2.0);
    EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(GeneralizedRelax, StepFunctionAndErrors) {
    const auto P = halfspace_projection({1.0, 0.0}, 0.0);
    const auto G = generalized_relax(P, RelaxationSpec{1.0, SigmaMaxStep{}}, [](ConstView) { return 2.0; });
    EXPECT_DOUBLE_EQ(G(Vector{2.0, 0.0})[0], -2.0);
    EXPECT_THROW(generalized_relax(P, RelaxationSpec{1.0, SigmaMaxStep{}}), InvalidArgument);
    const auto bad = generalized_relax(P, RelaxationSpec{1.0, SigmaMaxStep{}}, [](ConstView) { return -1.0; });
    EXPECT_THROW(bad(Vector{2.0, 0.0}), NumericalError);
    EXPECT_THROW(generalized_relax(P, RelaxationSpec{2.5, ConstantStep{1.0}}), InvalidArgument);
    EXPECT_THROW(generalized_relax(P, RelaxationSpec{1.0, ConstantStep{0.0}}), InvalidArgument);
}

TEST(GeneralizedRelax, FixedPointsPreserved) {
    const auto P = halfspace_projection({1.0, 2.0}, 3.0);
    const Vector z{1.0, 1.0};
    for (double lam : {0.3, 1.0, 1.7}) {
        const auto G = generalized_relax(P, RelaxationSpec{lam, ConstantStep{1.5}});
        EXPECT_LE(distance(G(z), z), default_fix_tol(z));
    }
}

TEST(OperatorHandle, DimensionAndReferenceChecks) {
    EXPECT_THROW(OperatorHandle(0, [](ConstView x) { return Vector(x.begin(), x.end()); }), InvalidArgument);
    EXPECT_THROW(OperatorHandle(1, [](ConstView x) { return Vector{-0.5 * x[0]}; }, {}, Vector{1.0}),
                 InvalidArgument);
    const auto T = minus_half();
    EXPECT_THROW(T(Vector{1.0, 2.0}), InvalidArgument);
    const OperatorHandle nan_op(1, [](ConstView) { return Vector{std::nan("")}; });
    EXPECT_THROW(nan_op(Vector{1.0}), NumericalError);
}

TEST(OperatorHandle, EvaluationIsDeterministic) {
    const auto P = ball_projection({0.3, -0.2}, 0.7);
    const Vector x{3.1, 4.7};
    EXPECT_EQ(P(x), P(x));
}

TEST(CheckProperty, CutterViolationMarginIsThreeQuarters) {
    const auto r = check_property(minus_half(), OperatorProperty::Cutter, {Vector{1.0}}, {Vector{0.0}});
    EXPECT_FALSE(r.passed);
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_DOUBLE_EQ(r.violations[0].margin, 0.75);
}

TEST(CheckProperty, IdentityIsQne) {
    const auto r = check_property(identity(3), OperatorProperty::QNE, sample_around(Vector(3, 0.0), 2.0, 20, 1),
                                  {Vector{1.0, 2.0, 3.0}});
    EXPECT_TRUE(r.passed);
    EXPECT_TRUE(r.violations.empty());
}

TEST(CheckProperty, MinusHalfIsSqne) {
    const auto r =
        check_property(minus_half(), OperatorProperty::SQNE, {Vector{1.0}, Vector{-3.0}, Vector{0.7}}, {Vector{0.0}});
    EXPECT_TRUE(r.passed);
}

TEST(CheckProperty, ProjectionsAreQneAndCutters) {
    const auto xs = sample_around(Vector{0.0, 0.0, 0.0}, 5.0, 200, 5);
    const auto H = halfspace_projection({1.0, -1.0, 2.0}, 0.5);
    const auto B = ball_projection({0.0, 1.0, 0.0}, 1.5);
    for (auto prop : {OperatorProperty::QNE, OperatorProperty::SQNE, OperatorProperty::Cutter}) {
        EXPECT_TRUE(check_property(H, prop, xs, {Vector{0.0, 0.0, 0.0}, Vector{-1.0, 1.0, 0.0}}).passed);
        EXPECT_TRUE(check_property(B, prop, xs, {Vector{0.0, 1.0, 0.0}, Vector{1.0, 1.0, 0.0}}).passed);
    }
}

TEST(CheckProperty, DetectsExpansiveOperator) {
    const OperatorHandle twice(1, [](ConstView x) { return Vector{2.0 * x[0]}; }, {}, Vector{0.0});
    const auto r = check_property(twice, OperatorProperty::QNE, {Vector{1.0}, Vector{-2.0}}, {Vector{0.0}});
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.violations.size(), 2u);
}

TEST(CheckProperty, RejectsNonFixedReference) {
    EXPECT_THROW(check_property(minus_half(), OperatorProperty::QNE, {Vector{1.0}}, {Vector{1.0}}), InvalidArgument);
}

TEST(CheckProperty, HalfspaceProjectionFormula) {
    const auto H = halfspace_projection({3.0, 4.0}, 5.0);
    const Vector y = H(Vector{3.0, 4.0});  // <a,x> = 25, excess 20 / 25
    EXPECT_NEAR(y[0], 3.0 - 0.8 * 3.0, 1e-15);
    EXPECT_NEAR(y[1], 4.0 - 0.8 * 4.0, 1e-15);
    EXPECT_EQ(H(Vector{0.0, 0.0}), (Vector{0.0, 0.0}));
}
