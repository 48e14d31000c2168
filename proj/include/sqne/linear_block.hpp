#pragma once

// Block iteration for consistent linear systems A x = b.
//
// Rows are partitioned into blocks A_t, b^t with diagonal SPD weights M_t.
// Each block contributes the affine operator
//
//   T_t(x) = x + lambda_t A_t^T M_t (b^t - A_t x)
//
// which is sQNE (and nonexpansive) for 0 < lambda_t < 2 / rho(A_t^T M_t A_t).
// Blocks become a string pool: one string over all blocks gives the
// sequential sweep, one length-one string per block gives the simultaneous
// (averaged) variant.

#include <memory>
#include <numeric>
#include <optional>
#include <variant>

#include <fmt/format.h>

#include "sqne/matrix.hpp"
#include "sqne/string_averaging.hpp"

namespace sqne {

struct FixedLambda {
    std::vector<double> values;  // one per block
};
/// lambda_t placed inside [eps, (2 - eps) / rho_t].
struct SpectralBand {
    double epsilon = 0.01;
};
/// lambda_t chosen per call to minimize the M_t-weighted block residual.
struct ResidualMinimizing {};

using LambdaStrategy = std::variant<FixedLambda, SpectralBand, ResidualMinimizing>;

template <RowMatrix Matrix>
struct LinearBlockProblem {
    Matrix A;
    Vector b;
    std::vector<std::vector<std::size_t>> blocks;  // row indices per block
    std::vector<Vector> weights;                   // diagonal of M_t, aligned with blocks[t]
    LambdaStrategy strategy = FixedLambda{};
    std::optional<Vector> reference_solution;      // known z with A z = b, for monitoring

    std::size_t block_count() const { return blocks.size(); }

    void validate() const {
        if (b.size() != A.rows())
            throw InvalidArgument("LinearBlockProblem: b has wrong length");
        if (blocks.empty())
            throw InvalidArgument("LinearBlockProblem: no blocks");
        if (weights.size() != blocks.size())
            throw InvalidArgument("LinearBlockProblem: one weight vector per block required");
        std::vector<char> seen(A.rows(), 0);
        for (std::size_t t = 0; t < blocks.size(); ++t) {
            if (blocks[t].empty())
                throw InvalidArgument(fmt::format("LinearBlockProblem: block {} is empty", t));
            if (weights[t].size() != blocks[t].size())
                throw InvalidArgument(fmt::format("LinearBlockProblem: block {} weight size mismatch", t));
            for (std::size_t k = 0; k < blocks[t].size(); ++k) {
                const std::size_t r = blocks[t][k];
                if (r >= A.rows())
                    throw InvalidArgument(fmt::format("LinearBlockProblem: row {} out of range", r));
                if (seen[r])
                    throw InvalidArgument(fmt::format("LinearBlockProblem: row {} appears in two blocks", r));
                seen[r] = 1;
                if (!(weights[t][k] > 0.0))
                    throw InvalidArgument(fmt::format("LinearBlockProblem: block {} has a non-positive weight", t));
            }
        }
        if (std::find(seen.begin(), seen.end(), 0) != seen.end())
            throw InvalidArgument("LinearBlockProblem: blocks do not cover every row");
        if (auto f = std::get_if<FixedLambda>(&strategy); f && f->values.size() != blocks.size())
            throw InvalidArgument("LinearBlockProblem: fixed strategy needs one lambda per block");
        if (reference_solution && reference_solution->size() != A.cols())
            throw InvalidArgument("LinearBlockProblem: reference solution has wrong length");
    }
};

/// Contiguous partition of `rows` rows into `p` blocks; the first rows % p
/// blocks get one extra row.
inline std::vector<std::vector<std::size_t>> contiguous_blocks(std::size_t rows, std::size_t p) {
    if (p == 0 || p > rows)
        throw InvalidArgument(fmt::format("contiguous_blocks: cannot split {} rows into {} blocks", rows, p));
    std::vector<std::vector<std::size_t>> blocks(p);
    std::size_t next = 0;
    for (std::size_t t = 0; t < p; ++t) {
        const std::size_t size = rows / p + (t < rows % p ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k)
            blocks[t].push_back(next++);
    }
    return blocks;
}

/// Cimmino weights diag(1 / (m_t |a_i|^2)) for the rows of one block.
template <RowMatrix Matrix>
Vector cimmino_weights(const Matrix& A, const std::vector<std::size_t>& block_rows) {
    Vector w(block_rows.size());
    const double mt = static_cast<double>(block_rows.size());
    for (std::size_t k = 0; k < block_rows.size(); ++k) {
        const double nn = A.row_norm2(block_rows[k]);
        if (!(nn > 0.0))
            throw InvalidArgument(fmt::format("cimmino_weights: row {} is zero", block_rows[k]));
        w[k] = 1.0 / (mt * nn);
    }
    return w;
}

template <RowMatrix Matrix>
Vector cimmino_weights(const LinearBlockProblem<Matrix>& P, std::size_t t) {
    return cimmino_weights(P.A, P.blocks.at(t));
}

/// Problem with Cimmino weights on every block.
template <RowMatrix Matrix>
LinearBlockProblem<Matrix> make_cimmino_problem(Matrix A, Vector b, std::vector<std::vector<std::size_t>> blocks,
                                                LambdaStrategy strategy,
                                                std::optional<Vector> reference = std::nullopt) {
    LinearBlockProblem<Matrix> P{std::move(A), std::move(b), std::move(blocks), {}, std::move(strategy),
                                 std::move(reference)};
    for (const auto& blk : P.blocks)
        P.weights.push_back(cimmino_weights(P.A, blk));
    P.validate();
    return P;
}

// ---------------------------------------------------------------------------
// spectral radius

struct SpectralRadiusEstimate {
    double value = 0.0;
    std::size_t iterations = 0;
};

/// Power iteration for a symmetric positive semidefinite operator given as a
/// matrix-vector product. Starts from the normalized all-ones vector and
/// stops when successive Rayleigh quotients agree to relative `tol`.
template <typename MatVec>
SpectralRadiusEstimate spectral_radius(MatVec&& apply, std::size_t n, double tol = 1e-8,
                                       std::size_t max_iters = 5000) {
    if (n == 0 || !(tol > 0.0))
        throw InvalidArgument("spectral_radius: need n > 0 and tol > 0");
    Vector v(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double prev = 0.0;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        Vector w = apply(ConstView(v));
        const double rq = dot(v, w);
        const double wn = norm(w);
        if (wn == 0.0)
            return {0.0, it};
        if (it > 1 && std::abs(rq - prev) <= tol * std::abs(rq))
            return {rq, it};
        prev = rq;
        for (std::size_t i = 0; i < n; ++i)
            v[i] = w[i] / wn;
    }
    throw NumericalError(fmt::format("spectral_radius: no convergence after {} iterations (last Rayleigh quotient {})",
                                     max_iters, prev));
}

namespace detail {

struct BlockResidual {
    Vector r;   // b^t - A_t x
    Vector mr;  // M_t r
    Vector g;   // A_t^T M_t r
};

template <RowMatrix Matrix>
BlockResidual block_residual(const LinearBlockProblem<Matrix>& P, std::size_t t, ConstView x) {
    const auto& rows = P.blocks[t];
    const auto& w = P.weights[t];
    BlockResidual br{Vector(rows.size()), Vector(rows.size()), Vector(P.A.cols(), 0.0)};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        br.r[k] = P.b[rows[k]] - P.A.row_dot(rows[k], x);
        br.mr[k] = w[k] * br.r[k];
        if (br.mr[k] != 0.0)
            P.A.add_scaled_row(rows[k], br.mr[k], br.g);
    }
    return br;
}

template <RowMatrix Matrix>
Vector block_normal_apply(const LinearBlockProblem<Matrix>& P, std::size_t t, ConstView x) {
    const auto& rows = P.blocks[t];
    Vector y(P.A.cols(), 0.0);
    for (std::size_t k = 0; k < rows.size(); ++k)
        P.A.add_scaled_row(rows[k], P.weights[t][k] * P.A.row_dot(rows[k], x), y);
    return y;
}

// lambda* from a precomputed residual; nullopt when r = 0.
template <RowMatrix Matrix>
std::optional<double> residual_minimizing_lambda(const LinearBlockProblem<Matrix>& P, std::size_t t,
                                                 const BlockResidual& br) {
    if (max_abs(br.r) == 0.0)
        return std::nullopt;
    const auto& rows = P.blocks[t];
    const auto& w = P.weights[t];
    // q = A_t g = A_t A_t^T M_t r;  <M r, q> = |g|^2
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double q = P.A.row_dot(rows[k], br.g);
        num += br.mr[k] * q;
        den += w[k] * q * q;
    }
    if (!(den > 0.0))
        throw NumericalError(fmt::format("residual_minimizing_lambda: degenerate block {} (A_t A_t^T M_t r = 0)", t));
    return num / den;
}

}  // namespace detail

/// rho(A_t^T M_t A_t) by power iteration.
template <RowMatrix Matrix>
double block_spectral_radius(const LinearBlockProblem<Matrix>& P, std::size_t t, double tol = 1e-8) {
    return spectral_radius([&](ConstView x) { return detail::block_normal_apply(P, t, x); }, P.A.cols(), tol).value;
}

/// lambda* = <M_t r, q> / <M_t q, q> with r = b^t - A_t x, q = A_t A_t^T M_t r:
/// the minimizer of |r - lambda q|_{M_t}, i.e. of the weighted block residual
/// after the step. Returns nullopt when the block is already solved (r = 0).
template <RowMatrix Matrix>
std::optional<double> residual_minimizing_lambda(const LinearBlockProblem<Matrix>& P, std::size_t t, ConstView x) {
    if (t >= P.block_count())
        throw InvalidArgument("residual_minimizing_lambda: block index out of range");
    return detail::residual_minimizing_lambda(P, t, detail::block_residual(P, t, x));
}

/// Resolved constant lambda_t, or nullopt for the residual-minimizing strategy.
template <RowMatrix Matrix>
std::optional<double> resolve_block_lambda(const LinearBlockProblem<Matrix>& P, std::size_t t) {
    if (auto f = std::get_if<FixedLambda>(&P.strategy))
        return f->values.at(t);
    if (auto band = std::get_if<SpectralBand>(&P.strategy)) {
        const double eps = band->epsilon;
        if (!(eps > 0.0 && eps < 1.0))
            throw InvalidArgument("SpectralBand: epsilon must lie in (0,1)");
        // Power iteration underestimates rho; inflate by 1% before bounding.
        const double rho = 1.01 * block_spectral_radius(P, t);
        const double lambda = 1.0 / rho;
        if (lambda < eps || lambda > (2.0 - eps) / rho)
            throw InvalidArgument(fmt::format("SpectralBand: empty band for block {} (rho = {})", t, rho));
        return lambda;
    }
    return std::nullopt;
}

template <RowMatrix Matrix>
double relative_residual(const LinearBlockProblem<Matrix>& P, ConstView x) {
    const double bn = norm(P.b);
    const double rn = norm(subtract(multiply(P.A, x), P.b));
    return bn > 0.0 ? rn / bn : rn;
}

/// The affine operator of block t. Shares the problem data.
template <RowMatrix Matrix>
OperatorHandle block_operator(std::shared_ptr<const LinearBlockProblem<Matrix>> P, std::size_t t) {
    if (t >= P->block_count())
        throw InvalidArgument("block_operator: block index out of range");
    bool nonzero = false;
    for (std::size_t r : P->blocks[t])
        nonzero = nonzero || P->A.row_norm2(r) > 0.0;
    if (!nonzero)
        throw InvalidArgument(fmt::format("block_operator: block {} is all zero", t));

    const std::optional<double> lambda = resolve_block_lambda(*P, t);
    auto eval = [P, t, lambda](ConstView x) {
        auto br = detail::block_residual(*P, t, x);
        Vector y(x.begin(), x.end());
        const std::optional<double> step = lambda ? lambda : detail::residual_minimizing_lambda(*P, t, br);
        if (step)
            axpy(*step, br.g, y);
        return y;
    };
    double bt = 0.0;
    for (std::size_t r : P->blocks[t])
        bt += P->b[r] * P->b[r];
    const double tol = 1e-10 * (1.0 + std::sqrt(bt));
    auto fix = [P, t, tol](ConstView x) { return norm(detail::block_residual(*P, t, x).r) <= tol; };
    return OperatorHandle(P->A.cols(), eval, fix, std::nullopt, fmt::format("block{}", t));
}

template <RowMatrix Matrix>
std::vector<OperatorHandle> block_operators(std::shared_ptr<const LinearBlockProblem<Matrix>> P) {
    P->validate();
    std::vector<OperatorHandle> pool;
    for (std::size_t t = 0; t < P->block_count(); ++t)
        pool.push_back(block_operator(P, t));
    return pool;
}

/// One string sweeping blocks 0..p-1 in order: a single application of the
/// averaged operator is one outer iteration of the sequential block method.
template <RowMatrix Matrix>
AveragedOperator assemble_sequential(std::shared_ptr<const LinearBlockProblem<Matrix>> P) {
    auto pool = block_operators(P);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return AveragedOperator(std::move(pool), StringPlan::uniform({order}),
                            [P](ConstView x) { return relative_residual(*P, x); }, P->reference_solution);
}

/// One length-one string per block with equal weights 1/p.
template <RowMatrix Matrix>
AveragedOperator assemble_simultaneous(std::shared_ptr<const LinearBlockProblem<Matrix>> P) {
    auto pool = block_operators(P);
    std::vector<std::vector<std::size_t>> strings;
    for (std::size_t t = 0; t < pool.size(); ++t)
        strings.push_back({t});
    return AveragedOperator(std::move(pool), StringPlan::uniform(std::move(strings)),
                            [P](ConstView x) { return relative_residual(*P, x); }, P->reference_solution);
}

}  // namespace sqne
