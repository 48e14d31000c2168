#pragma once

// Subgradient projections for systems of convex inequalities g_i(x) <= 0.
//
// Cyclic form (one function):
//   T(x) = x - mu g+(x) / |l(x)|^2 l(x)
// Parallel block form:
//   T_t(x) = x - mu_t sum_{i in B_t} w_i g_i+(x) / |l_i(x)|^2 l_i(x)
// with the step mu_t that minimizes the distance bound
//   mu_t = sum w_i g_i+^2 / |l_i|^2  /  |sum w_i g_i+ / |l_i|^2 l_i|^2.
//
// Constraints with g_i+(x) = 0 contribute nothing and their subgradient is
// never evaluated, so block-feasible points are exact fixed points.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sqne/operator.hpp"
#include "sqne/string_averaging.hpp"

namespace sqne {

struct ConvexFunctionOracle {
    std::function<double(ConstView)> value;
    std::function<Vector(ConstView)> subgrad;
    std::string label;
};

inline double plus_part(double g) {
    if (!std::isfinite(g))
        throw InvalidArgument("plus_part: non-finite value");
    return std::max(0.0, g);
}

struct InequalityBlockSystem {
    std::size_t dim = 0;
    std::vector<ConvexFunctionOracle> oracles;
    std::vector<std::vector<std::size_t>> blocks;  // indices into oracles
    std::vector<std::vector<double>> weights;      // aligned with blocks, each summing to 1

    /// Blocks with equal intra-block weights 1/|B_t|.
    static InequalityBlockSystem uniform(std::size_t dim, std::vector<ConvexFunctionOracle> oracles,
                                         std::vector<std::vector<std::size_t>> blocks) {
        InequalityBlockSystem s{dim, std::move(oracles), std::move(blocks), {}};
        for (const auto& b : s.blocks)
            s.weights.emplace_back(b.size(), 1.0 / static_cast<double>(std::max<std::size_t>(b.size(), 1)));
        s.validate();
        return s;
    }

    void validate() const {
        if (dim == 0)
            throw InvalidArgument("InequalityBlockSystem: dimension must be positive");
        if (blocks.size() != weights.size())
            throw InvalidArgument("InequalityBlockSystem: one weight list per block required");
        std::vector<char> covered(oracles.size(), 0);
        for (std::size_t t = 0; t < blocks.size(); ++t) {
            if (blocks[t].empty())
                throw InvalidArgument(fmt::format("InequalityBlockSystem: block {} is empty", t));
            if (weights[t].size() != blocks[t].size())
                throw InvalidArgument(fmt::format("InequalityBlockSystem: block {} weight size mismatch", t));
            double total = 0.0;
            for (std::size_t k = 0; k < blocks[t].size(); ++k) {
                if (blocks[t][k] >= oracles.size())
                    throw InvalidArgument(fmt::format("InequalityBlockSystem: block {} references function {}", t,
                                                      blocks[t][k]));
                if (!(weights[t][k] > 0.0))
                    throw InvalidArgument(fmt::format("InequalityBlockSystem: block {} has a non-positive weight", t));
                covered[blocks[t][k]] = 1;
                total += weights[t][k];
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw InvalidArgument(fmt::format("InequalityBlockSystem: block {} weights sum to {}", t, total));
        }
        if (std::find(covered.begin(), covered.end(), 0) != covered.end())
            throw InvalidArgument("InequalityBlockSystem: blocks do not cover every function");
    }

    /// max_i g_i+(x) over the whole system.
    double max_violation(ConstView x) const {
        double m = 0.0;
        for (const auto& o : oracles)
            m = std::max(m, plus_part(o.value(x)));
        return m;
    }
};

namespace detail {

inline Vector checked_subgrad(const ConvexFunctionOracle& o, ConstView x, double gp, std::size_t dim) {
    Vector l = o.subgrad(x);
    if (l.size() != dim)
        throw InvalidArgument("subgradient of '" + o.label + "' has wrong dimension");
    const double ll = norm2(l);
    if (!(ll > 0.0) || !std::isfinite(ll))
        throw NumericalError(fmt::format("zero or non-finite subgradient of '{}' at a violated point (g+ = {}): "
                                         "inconsistent oracle",
                                         o.label, gp));
    return l;
}

struct BlockAggregate {
    bool any_violated = false;
    double weighted_sq = 0.0;  // sum w_i g_i+^2 / |l_i|^2
    Vector direction;          // sum w_i g_i+ / |l_i|^2 l_i
};

inline BlockAggregate aggregate_block(const InequalityBlockSystem& s, std::size_t t, ConstView x) {
    BlockAggregate agg;
    agg.direction.assign(s.dim, 0.0);
    const auto& idx = s.blocks[t];
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& o = s.oracles[idx[k]];
        const double gp = plus_part(o.value(x));
        if (gp == 0.0)
            continue;
        agg.any_violated = true;
        const Vector l = checked_subgrad(o, x, gp, s.dim);
        const double ll = norm2(l);
        const double w = s.weights[t][k];
        agg.weighted_sq += w * gp * gp / ll;
        axpy(w * gp / ll, l, agg.direction);
    }
    return agg;
}

inline double mu_from(const BlockAggregate& agg, std::size_t t) {
    const double dd = norm2(agg.direction);
    if (!(dd > 0.0))
        throw NumericalError(fmt::format("optimal_mu: block {} has violated constraints but a zero aggregated "
                                         "direction",
                                         t));
    return agg.weighted_sq / dd;
}

}  // namespace detail

/// Cyclic subgradient projection for one function with fixed mu in (0,2).
inline OperatorHandle cyclic_subgrad_op(std::size_t dim, ConvexFunctionOracle o, double mu) {
    if (!(mu > 0.0 && mu < 2.0))
        throw InvalidArgument("cyclic_subgrad_op: mu must lie in (0,2)");
    auto shared = std::make_shared<const ConvexFunctionOracle>(std::move(o));
    auto eval = [shared, mu, dim](ConstView x) {
        Vector y(x.begin(), x.end());
        const double gp = plus_part(shared->value(x));
        if (gp == 0.0)
            return y;
        const Vector l = detail::checked_subgrad(*shared, x, gp, dim);
        axpy(-mu * gp / norm2(l), l, y);
        return y;
    };
    auto fix = [shared](ConstView x) { return shared->value(x) <= 0.0; };
    return OperatorHandle(dim, eval, fix, std::nullopt, shared->label);
}

/// Step mu_t for block t at x. Throws InvalidArgument when no member of the
/// block is violated (the operator is then the identity and needs no step).
inline double optimal_mu(const InequalityBlockSystem& s, std::size_t t, ConstView x) {
    if (t >= s.blocks.size())
        throw InvalidArgument("optimal_mu: block index out of range");
    const auto agg = detail::aggregate_block(s, t, x);
    if (!agg.any_violated)
        throw InvalidArgument(fmt::format("optimal_mu: block {} is feasible at x; operator is the identity", t));
    return detail::mu_from(agg, t);
}

/// Parallel subgradient projection over block t with mu_t evaluated per call.
inline OperatorHandle parallel_block_op(std::shared_ptr<const InequalityBlockSystem> s, std::size_t t) {
    if (t >= s->blocks.size() || s->blocks[t].empty())
        throw InvalidArgument("parallel_block_op: invalid block");
    auto eval = [s, t](ConstView x) {
        Vector y(x.begin(), x.end());
        const auto agg = detail::aggregate_block(*s, t, x);
        if (!agg.any_violated)
            return y;
        axpy(-detail::mu_from(agg, t), agg.direction, y);
        return y;
    };
    auto fix = [s, t](ConstView x) {
        for (std::size_t i : s->blocks[t])
            if (s->oracles[i].value(x) > 0.0)
                return false;
        return true;
    };
    return OperatorHandle(s->dim, eval, fix, std::nullopt, fmt::format("subgrad-block{}", t));
}

/// One length-one string per block, string weights 1/E, monitored by
/// max_i g_i+ over the whole system.
inline AveragedOperator assemble_block_strings(std::shared_ptr<const InequalityBlockSystem> s,
                                               std::optional<Vector> reference = std::nullopt) {
    s->validate();
    std::vector<OperatorHandle> pool;
    std::vector<std::vector<std::size_t>> strings;
    for (std::size_t t = 0; t < s->blocks.size(); ++t) {
        pool.push_back(parallel_block_op(s, t));
        strings.push_back({t});
    }
    return AveragedOperator(std::move(pool), StringPlan::uniform(std::move(strings)),
                            [s](ConstView x) { return s->max_violation(x); }, std::move(reference));
}

}  // namespace sqne
