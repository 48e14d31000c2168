#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "sqne/linear_block.hpp"
#include "sqne/verify.hpp"

using namespace sqne;

namespace {

DenseMatrix random_dense(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DenseMatrix A(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            A(i, j) = u(rng);
    return A;
}

Vector random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector v(n);
    for (double& x : v)
        x = u(rng);
    return v;
}

template <typename M>
std::shared_ptr<const LinearBlockProblem<M>> share(LinearBlockProblem<M> P) {
    return std::make_shared<const LinearBlockProblem<M>>(std::move(P));
}

// Weighted block residual |b^t - A_t y|_{M_t}^2.
double weighted_block_residual(const LinearBlockProblem<DenseMatrix>& P, std::size_t t, ConstView y) {
    double s = 0.0;
    for (std::size_t k = 0; k < P.blocks[t].size(); ++k) {
        const std::size_t i = P.blocks[t][k];
        const double r = P.b[i] - P.A.row_dot(i, y);
        s += P.weights[t][k] * r * r;
    }
    return s;
}

}  // namespace

TEST(ContiguousBlocks, RemainderGoesToLeadingBlocks) {
    const auto b = contiguous_blocks(10, 3);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(b[0].size(), 4u);
    EXPECT_EQ(b[1].size(), 3u);
    EXPECT_EQ(b[2].size(), 3u);
    EXPECT_EQ(b[1].front(), 4u);
    EXPECT_THROW(contiguous_blocks(3, 4), InvalidArgument);
}

TEST(CimminoWeights, Examples) {
    DenseMatrix A(2, 2);
    A(0, 0) = 1.0;
    A(1, 1) = 2.0;
    const Vector w = cimmino_weights(A, {0, 1});
    EXPECT_DOUBLE_EQ(w[0], 0.5);
    EXPECT_DOUBLE_EQ(w[1], 0.125);
    DenseMatrix unit(1, 3);
    unit(0, 1) = 1.0;
    EXPECT_DOUBLE_EQ(cimmino_weights(unit, {0})[0], 1.0);
    DenseMatrix zero(2, 2);
    zero(0, 0) = 1.0;
    EXPECT_THROW(cimmino_weights(zero, {0, 1}), InvalidArgument);
}

TEST(BlockOperator, IdentitySystemSolvedInOneStep) {
    DenseMatrix I(3, 3);
    for (int i = 0; i < 3; ++i)
        I(i, i) = 1.0;
    const Vector b{1.0, -2.0, 0.5};
    auto P = share(LinearBlockProblem<DenseMatrix>{I, b, {{0, 1, 2}}, {{1.0, 1.0, 1.0}}, FixedLambda{{1.0}}, b});
    const auto T = block_operator(P, 0);
    EXPECT_EQ(T(Vector{7.0, 8.0, 9.0}), b);
}

TEST(BlockOperator, KaczmarzRowProjection) {
    DenseMatrix A(1, 2);
    A(0, 0) = 1.0;
    auto P = share(LinearBlockProblem<DenseMatrix>{A, {0.0}, {{0}}, {{1.0}}, FixedLambda{{1.0}}, {}});
    EXPECT_EQ(block_operator(P, 0)(Vector{2.0, 3.0}), (Vector{0.0, 3.0}));
}

TEST(BlockOperator, ScalingInvariance) {
    const auto A = random_dense(12, 6, 1);
    const Vector z = random_vector(6, 2);
    const Vector b = multiply(A, z);
    auto blocks = contiguous_blocks(12, 3);
    auto P = share(make_cimmino_problem(A, b, blocks, FixedLambda{{1.0, 1.0, 1.0}}));
    DenseMatrix As = A;
    Vector bs = b;
    for (std::size_t r : blocks[1]) {
        As.scale_row(r, 7.5);
        bs[r] *= 7.5;
    }
    auto Q = share(make_cimmino_problem(As, bs, blocks, FixedLambda{{1.0, 1.0, 1.0}}));
    const auto T = block_operator(P, 1), U = block_operator(Q, 1);
    for (const auto& x : sample_around(Vector(6, 0.0), 3.0, 20, 3)) {
        const Vector a = T(x), c = U(x);
        EXPECT_LE(distance(a, c), 1e-12 * std::max(1.0, norm(a)));
    }
}

TEST(BlockOperator, RejectsZeroBlock) {
    DenseMatrix A(2, 2);
    A(0, 0) = 1.0;
    auto P = share(LinearBlockProblem<DenseMatrix>{A, {1.0, 0.0}, {{0}, {1}}, {{1.0}, {1.0}}, FixedLambda{{1.0, 1.0}}, {}});
    EXPECT_NO_THROW(block_operator(P, 0));
    EXPECT_THROW(block_operator(P, 1), InvalidArgument);
}

TEST(SpectralRadius, DiagonalExamples) {
    auto diag = [](std::vector<double> d) {
        return [d](ConstView x) {
            Vector y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = d[i] * x[i];
            return y;
        };
    };
    EXPECT_NEAR(spectral_radius(diag({1.0, 1.0, 1.0}), 3).value, 1.0, 1e-12);
    EXPECT_NEAR(spectral_radius(diag({1.0, 4.0}), 2).value, 4.0, 1e-6);
}

TEST(SpectralRadius, MatchesEigenSolver) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto A = random_dense(8, 12, 100 + seed);
        auto P = make_cimmino_problem(A, Vector(8, 0.0), {{0, 1, 2, 3, 4, 5, 6, 7}}, FixedLambda{{1.0}});
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(12, 12);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                for (std::size_t k = 0; k < 12; ++k)
                    B(j, k) += P.weights[0][i] * A(i, j) * A(i, k);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
        const double exact = es.eigenvalues().maxCoeff();
        EXPECT_NEAR(block_spectral_radius(P, 0), exact, 1e-5 * exact) << "seed " << seed;
        EXPECT_LE(exact, 1.0 + 1e-12);  // Cimmino weighting
    }
}

TEST(SpectralBand, LambdaIsInverseInflatedRadius) {
    const auto A = random_dense(6, 10, 5);
    auto P = make_cimmino_problem(A, Vector(6, 0.0), {{0, 1, 2}, {3, 4, 5}}, SpectralBand{0.01});
    for (std::size_t t = 0; t < 2; ++t) {
        const double rho = block_spectral_radius(P, t);
        EXPECT_NEAR(*resolve_block_lambda(P, t), 1.0 / (1.01 * rho), 1e-12);
    }
}

TEST(ResidualMinimizing, SingleRowLandsOnHyperplane) {
    DenseMatrix A(1, 3);
    A(0, 0) = 2.0;
    A(0, 1) = -1.0;
    A(0, 2) = 0.5;
    auto P = share(make_cimmino_problem(A, Vector{3.0}, {{0}}, ResidualMinimizing{}));
    const Vector x{1.0, 4.0, -2.0};
    const Vector y = block_operator(P, 0)(x);
    EXPECT_LE(std::abs(A.row_dot(0, y) - 3.0), 1e-12);
    EXPECT_NEAR(*residual_minimizing_lambda(*P, 0, x), 1.0, 1e-12);
}

TEST(ResidualMinimizing, OrthogonalRowsDecreaseResidual) {
    DenseMatrix A(3, 4);
    A(0, 0) = 1.0;
    A(1, 1) = 2.0;
    A(1, 2) = 2.0;
    A(2, 3) = -3.0;
    auto P = share(make_cimmino_problem(A, Vector{1.0, 2.0, 3.0}, {{0, 1, 2}}, ResidualMinimizing{}));
    const auto T = block_operator(P, 0);
    for (const auto& x : sample_around(Vector(4, 0.0), 5.0, 20, 8))
        EXPECT_LT(weighted_block_residual(*P, 0, T(x)), weighted_block_residual(*P, 0, x));
}

TEST(ResidualMinimizing, MatchesGridScan) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto A = random_dense(5, 6, 300 + seed);
        auto P = make_cimmino_problem(A, random_vector(5, 400 + seed), {{0, 1, 2, 3, 4}}, ResidualMinimizing{});
        const Vector x = random_vector(6, 500 + seed);
        const double lam = *residual_minimizing_lambda(P, 0, x);
        const auto br = detail::block_residual(P, 0, x);
        auto f = [&](double l) {
            Vector y = x;
            axpy(l, br.g, y);
            return weighted_block_residual(P, 0, y);
        };
        double best = 0.0, best_val = f(0.0);
        for (int k = 1; k <= 4000; ++k) {
            if (f(k * 1e-3) < best_val)
                best_val = f(k * 1e-3), best = k * 1e-3;
        }
        if (lam <= 4.0) {
            EXPECT_LE(std::abs(lam - best), 1e-3) << "seed " << seed;
        }
        EXPECT_GT(lam, 0.0);
    }
}

TEST(ResidualMinimizing, SolvedAndDegenerateBlocks) {
    DenseMatrix A(2, 2);
    A(0, 0) = 1.0;
    A(1, 0) = 1.0;
    auto P = make_cimmino_problem(A, Vector{1.0, -1.0}, {{0, 1}}, ResidualMinimizing{});
    EXPECT_THROW(residual_minimizing_lambda(P, 0, Vector{0.0, 0.0}), NumericalError);  // A^T M r = 0
    auto Q = make_cimmino_problem(A, Vector{1.0, 1.0}, {{0, 1}}, ResidualMinimizing{});
    EXPECT_FALSE(residual_minimizing_lambda(Q, 0, Vector{1.0, 5.0}).has_value());
}

TEST(Assemble, SequentialOrthogonalRowsExactInOneSweep) {
    DenseMatrix A(2, 2);
    A(0, 0) = 1.0;
    A(1, 1) = 1.0;
    auto P = share(LinearBlockProblem<DenseMatrix>{A, {3.0, -1.0}, {{0}, {1}}, {{1.0}, {1.0}}, FixedLambda{{1.0, 1.0}},
                                                   Vector{3.0, -1.0}});
    const auto S = assemble_sequential(P);
    EXPECT_EQ(evaluate_strings(S, Vector{10.0, 10.0}).average, (Vector{3.0, -1.0}));
}

TEST(Assemble, SingleBlockEqualsBlockOperator) {
    const auto A = random_dense(5, 4, 9);
    auto P = share(make_cimmino_problem(A, random_vector(5, 10), {{0, 1, 2, 3, 4}}, FixedLambda{{1.0}}));
    const auto S = assemble_sequential(P), M = assemble_simultaneous(P);
    const auto T = block_operator(P, 0);
    const Vector x = random_vector(4, 11);
    EXPECT_EQ(evaluate_strings(S, x).average, T(x));
    EXPECT_EQ(evaluate_strings(M, x).average, T(x));
}

TEST(Assemble, SixteenBlocksSimultaneous) {
    const auto A = random_dense(64, 20, 12);
    auto P = share(make_cimmino_problem(A, Vector(64, 0.0), contiguous_blocks(64, 16), ResidualMinimizing{}));
    const auto M = assemble_simultaneous(P);
    EXPECT_EQ(M.plan().strings.size(), 16u);
    for (double w : M.plan().weights)
        EXPECT_DOUBLE_EQ(w, 1.0 / 16.0);
}

TEST(Convergence, WeResidualMonotoneOnConsistentSystem) {
    const auto A = random_dense(40, 20, 13);
    const Vector z = random_vector(20, 14);
    auto P = share(make_cimmino_problem(A, multiply(A, z), contiguous_blocks(40, 4), FixedLambda{{1, 1, 1, 1}}, z));
    SolverConfig cfg;
    cfg.step_mode = ConstantStep{1.0};
    cfg.max_iters = 200;
    cfg.feasibility_tol = 1e-12;
    cfg.assert_fejer = true;
    const auto r = iterate(assemble_simultaneous(P), Vector(20, 0.0), cfg);
    for (std::size_t k = 1; k < r.trace.rows.size(); ++k)
        EXPECT_LE(r.trace.rows[k].violation, r.trace.rows[k - 1].violation * (1.0 + 1e-12));
}

TEST(Convergence, BlockOperatorsQneInBandNotBeyond) {
    const auto A = random_dense(30, 10, 15);
    const Vector z = random_vector(10, 16);
    const Vector b = multiply(A, z);
    const auto blocks = contiguous_blocks(30, 3);
    const auto xs = sample_around(z, 5.0, 200, 17);
    auto band = share(make_cimmino_problem(A, b, blocks, SpectralBand{0.01}));
    for (const auto& T : block_operators(band))
        EXPECT_TRUE(check_property(T, OperatorProperty::QNE, xs, {z}).passed);

    // lambda_t = 2.2 / rho_t lies outside (0, 2 / rho_t): expansive.
    auto base = make_cimmino_problem(A, b, blocks, FixedLambda{{1, 1, 1}});
    Vector lam;
    for (std::size_t t = 0; t < 3; ++t)
        lam.push_back(2.2 / block_spectral_radius(base, t));
    base.strategy = FixedLambda{lam};
    auto wild = share(base);
    for (const auto& T : block_operators(wild))
        EXPECT_FALSE(check_property(T, OperatorProperty::QNE, xs, {z}).passed);
}

TEST(CsrMatrix, TripletsAndRoundTrip) {
    auto M = CsrMatrix::from_triplets(3, 4, {{2, 1, 1.5}, {0, 3, -2.0}, {0, 3, 0.5}, {1, 0, 1.0 / 3.0}});
    EXPECT_EQ(M.nnz(), 3u);
    EXPECT_DOUBLE_EQ(M.row_dot(0, Vector{0, 0, 0, 2.0}), -3.0);
    std::stringstream s;
    write_coordinate(s, M);
    s.seekg(0);
    const auto R = read_coordinate(s);
    EXPECT_EQ(R.rows(), 3u);
    EXPECT_EQ(R.nnz(), 3u);
    for (std::size_t e = 0; e < R.nnz(); ++e)
        EXPECT_EQ(R.value(e), M.value(e));  // 17 significant digits round-trip
    EXPECT_THROW(CsrMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), InvalidArgument);
}

TEST(CsrMatrix, ReaderDiagnostics) {
    std::istringstream ok("% comment\n2 2 1\n% another\n1 2 4.5\n");
    EXPECT_DOUBLE_EQ(read_coordinate(ok).row_sum(0), 4.5);
    std::istringstream bad("2 2 1\n3 1 1.0\n");
    EXPECT_THROW(read_coordinate(bad), InvalidArgument);
    std::istringstream short_file("2 2 2\n1 1 1.0\n");
    EXPECT_THROW(read_coordinate(short_file), InvalidArgument);
    std::istringstream vec("1.5\n\n-2\n");
    EXPECT_EQ(read_vector(vec), (Vector{1.5, -2.0}));
    std::istringstream badvec("1.5\nabc\n");
    EXPECT_THROW(read_vector(badvec), InvalidArgument);
}
