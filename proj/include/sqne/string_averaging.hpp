#pragma once

// String averaging of operator compositions and the extrapolated fixed-point
// driver built on it.
//
//   U_t(x) = T_{i_m}( ... T_{i_2}(T_{i_1}(x)) )        one string
//   T(x)   = sum_t w_t U_t(x)                          weighted average
//   x+     = x + lambda_k sigma(x) (T(x) - x)          one outer iteration
//
// sigma is either a constant or the extrapolated step
//   sigma_max(x) = sum_t w_t |U_t(x) - x|^2 / |T(x) - x|^2   (>= 1).

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sqne/operator.hpp"

namespace sqne {

/// Ordered operator index lists (0-based pool indices) with averaging weights.
struct StringPlan {
    std::vector<std::vector<std::size_t>> strings;
    std::vector<double> weights;

    /// Equal weights 1/E.
    static StringPlan uniform(std::vector<std::vector<std::size_t>> strings) {
        StringPlan plan;
        const double w = 1.0 / static_cast<double>(strings.size());
        plan.weights.assign(strings.size(), w);
        plan.strings = std::move(strings);
        return plan;
    }

    /// Positive raw weights scaled to sum to one.
    static StringPlan normalized(std::vector<std::vector<std::size_t>> strings, std::vector<double> raw) {
        double total = 0.0;
        for (double w : raw) {
            if (!(w > 0.0))
                throw InvalidArgument("StringPlan: weights must be positive");
            total += w;
        }
        for (double& w : raw)
            w /= total;
        return StringPlan{std::move(strings), std::move(raw)};
    }

    std::size_t size() const { return strings.size(); }

    /// Checks the plan against a pool of `pool_size` operators: nonempty
    /// strings, indices in range, every operator used, positive weights
    /// summing to one.
    void validate(std::size_t pool_size) const {
        if (strings.empty())
            throw InvalidArgument("StringPlan: no strings");
        if (weights.size() != strings.size())
            throw InvalidArgument("StringPlan: one weight per string required");
        std::set<std::size_t> covered;
        for (std::size_t t = 0; t < strings.size(); ++t) {
            if (strings[t].empty())
                throw InvalidArgument("StringPlan: string " + std::to_string(t) + " is empty");
            for (std::size_t i : strings[t]) {
                if (i >= pool_size)
                    throw InvalidArgument("StringPlan: string " + std::to_string(t) + " references operator " +
                                          std::to_string(i) + " outside the pool of " + std::to_string(pool_size));
                covered.insert(i);
            }
        }
        if (covered.size() != pool_size)
            throw InvalidArgument("StringPlan: strings do not cover every operator in the pool");
        double total = 0.0;
        for (double w : weights) {
            if (!(w > 0.0))
                throw InvalidArgument("StringPlan: weights must be positive");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw InvalidArgument("StringPlan: weights sum to " + std::to_string(total) + ", expected 1");
    }
};

/// Scalar measure of infeasibility used for stopping (max g_i^+ or a residual).
using FeasibilityMeasure = std::function<double(ConstView)>;

/// Pool of operators plus a string plan. Optionally carries a feasibility
/// measure and a known point of the solution set for monitoring.
class AveragedOperator {
public:
    AveragedOperator(std::vector<OperatorHandle> pool, StringPlan plan, FeasibilityMeasure violation = {},
                     std::optional<Vector> reference = std::nullopt)
        : pool_(std::move(pool)), plan_(std::move(plan)), violation_(std::move(violation)),
          reference_(std::move(reference)) {
        if (pool_.empty())
            throw InvalidArgument("AveragedOperator: empty operator pool");
        plan_.validate(pool_.size());
        for (const auto& op : pool_)
            if (op.dim() != pool_.front().dim())
                throw InvalidArgument("AveragedOperator: operators have different dimensions");
        if (reference_ && reference_->size() != dim())
            throw InvalidArgument("AveragedOperator: reference point has wrong dimension");
    }

    std::size_t dim() const { return pool_.front().dim(); }
    const std::vector<OperatorHandle>& pool() const { return pool_; }
    const StringPlan& plan() const { return plan_; }
    const FeasibilityMeasure& violation() const { return violation_; }
    const std::optional<Vector>& reference() const { return reference_; }

    /// Evaluate strings on separate threads (results are identical either way).
    void set_parallel(bool on) { parallel_ = on; }
    bool parallel() const { return parallel_; }

private:
    std::vector<OperatorHandle> pool_;
    StringPlan plan_;
    FeasibilityMeasure violation_;
    std::optional<Vector> reference_;
    bool parallel_ = false;
};

struct StringEvaluation {
    std::vector<Vector> strings;  // U_t(x), plan order
    Vector average;               // T(x)
};

namespace detail {

inline Vector apply_string(const AveragedOperator& op, std::size_t t, ConstView x) {
    const auto& indices = op.plan().strings[t];
    Vector y(x.begin(), x.end());
    for (std::size_t pos = 0; pos < indices.size(); ++pos) {
        try {
            y = op.pool()[indices[pos]](y);
        } catch (const std::exception& e) {
            throw NumericalError("string " + std::to_string(t) + ", position " + std::to_string(pos) +
                                 " (operator " + std::to_string(indices[pos]) + "): " + e.what());
        }
    }
    return y;
}

// Pairwise sum of w_t * U_t over t in [lo, hi).
inline Vector weighted_pairwise_sum(const std::vector<Vector>& vals, const std::vector<double>& w, std::size_t lo,
                                    std::size_t hi) {
    if (hi - lo == 1) {
        Vector r = vals[lo];
        if (w[lo] != 1.0)
            for (double& v : r)
                v *= w[lo];
        return r;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    Vector a = weighted_pairwise_sum(vals, w, lo, mid);
    const Vector b = weighted_pairwise_sum(vals, w, mid, hi);
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] += b[i];
    return a;
}

}  // namespace detail

/// All string outputs U_t(x) and their weighted average T(x).
inline StringEvaluation evaluate_strings(const AveragedOperator& op, ConstView x) {
    if (x.size() != op.dim())
        throw InvalidArgument("evaluate_strings: point has dimension " + std::to_string(x.size()) + ", expected " +
                              std::to_string(op.dim()));
    const std::size_t e = op.plan().size();
    StringEvaluation out;
    out.strings.resize(e);
    if (op.parallel() && e > 1) {
        std::vector<std::future<Vector>> jobs;
        jobs.reserve(e);
        for (std::size_t t = 0; t < e; ++t)
            jobs.push_back(std::async(std::launch::async, [&op, t, x] { return detail::apply_string(op, t, x); }));
        for (std::size_t t = 0; t < e; ++t)
            out.strings[t] = jobs[t].get();
    } else {
        for (std::size_t t = 0; t < e; ++t)
            out.strings[t] = detail::apply_string(op, t, x);
    }
    out.average = detail::weighted_pairwise_sum(out.strings, op.plan().weights, 0, e);
    return out;
}

/// Extrapolated step size. Returns 1 when |T(x) - x|^2 <= guard.
/// Throws InvariantViolation if the result drops below 1 - 1e-10.
inline double sigma_max(const AveragedOperator& op, ConstView x, const StringEvaluation& ev, double guard) {
    const Vector d = subtract(ev.average, x);
    const double den = norm2(d);
    if (!std::isfinite(den))
        throw NumericalError("sigma_max: non-finite |T(x) - x|");
    if (den <= guard)
        return 1.0;
    double num = 0.0;
    for (std::size_t t = 0; t < ev.strings.size(); ++t) {
        const double s = distance2(ev.strings[t], x);
        if (!std::isfinite(s))
            throw NumericalError("sigma_max: non-finite |U_t(x) - x| for string " + std::to_string(t));
        num += op.plan().weights[t] * s;
    }
    const double sigma = num / den;
    if (!(sigma >= 1.0 - 1e-10))
        throw InvariantViolation("sigma_max: value " + std::to_string(sigma) + " below the lower bound 1");
    return sigma;
}

struct SolverConfig {
    std::function<double(std::size_t)> lambda_schedule = [](std::size_t) { return 1.0; };
    double epsilon = 0.01;
    StepMode step_mode = SigmaMaxStep{};
    std::size_t max_iters = 1000;
    double feasibility_tol = 1e-4;
    double fixed_point_guard = 1e-10;
    bool assert_fejer = false;
    bool assert_error_bound = false;

    static std::function<double(std::size_t)> constant_lambda(double lambda) {
        return [lambda](std::size_t) { return lambda; };
    }

    void validate() const {
        if (!lambda_schedule)
            throw InvalidArgument("SolverConfig: missing lambda schedule");
        if (!(epsilon > 0.0 && epsilon < 0.5))
            throw InvalidArgument("SolverConfig: epsilon must lie in (0, 1/2)");
        if (max_iters < 1)
            throw InvalidArgument("SolverConfig: max_iters must be at least 1");
        if (!(feasibility_tol > 0.0))
            throw InvalidArgument("SolverConfig: feasibility_tol must be positive");
        if (!(fixed_point_guard > 0.0))
            throw InvalidArgument("SolverConfig: fixed_point_guard must be positive");
        if (auto c = std::get_if<ConstantStep>(&step_mode); c && !(c->value > 0.0))
            throw InvalidArgument("SolverConfig: constant step must be positive");
    }
};

enum class TerminalStatus { FeasibilityReached, GuardTriggered, MaxIters };

inline const char* to_string(TerminalStatus s) {
    switch (s) {
        case TerminalStatus::FeasibilityReached: return "FeasibilityReached";
        case TerminalStatus::GuardTriggered: return "GuardTriggered";
        case TerminalStatus::MaxIters: return "MaxIters";
    }
    return "?";
}

struct IterationRow {
    std::size_t k = 0;
    double sigma = 1.0;
    double lambda = 1.0;
    double step_norm = 0.0;  // |T(x^k) - x^k|
    double violation = 0.0;
    double distance = std::numeric_limits<double>::quiet_NaN();  // |x^k - z|, NaN without reference
};

/// State before each update, plus one terminal row. Row k describes x^k.
struct IterationTrace {
    std::vector<IterationRow> rows;
    TerminalStatus terminal_status = TerminalStatus::MaxIters;

    std::size_t iterations() const { return rows.empty() ? 0 : rows.back().k; }

    /// Index of the first row with violation <= tol.
    std::optional<std::size_t> first_row_within(double tol) const {
        for (const auto& r : rows)
            if (r.violation <= tol)
                return r.k;
        return std::nullopt;
    }
};

struct SolveResult {
    Vector x;
    IterationTrace trace;
};

/// Runs x^{k+1} = x^k + lambda_k sigma(x^k) (T(x^k) - x^k) until the
/// feasibility measure drops to cfg.feasibility_tol, the guard
/// |T(x^k) - x^k|^2 <= cfg.fixed_point_guard fires, or cfg.max_iters updates
/// have been made. Without a feasibility measure the step norm is used.
inline SolveResult iterate(const AveragedOperator& op, ConstView x0, const SolverConfig& cfg) {
    cfg.validate();
    if (x0.size() != op.dim())
        throw InvalidArgument("iterate: starting point has wrong dimension");
    if (!all_finite(x0))
        throw InvalidArgument("iterate: starting point is not finite");

    const std::optional<Vector>& z = op.reference();
    const double fejer_slack = z ? 1e-9 * (1.0 + norm(*z)) : 0.0;

    SolveResult res;
    Vector x(x0.begin(), x0.end());
    for (std::size_t k = 0;; ++k) {
        const StringEvaluation ev = evaluate_strings(op, x);
        const Vector d = subtract(ev.average, x);
        const double s2 = norm2(d);

        IterationRow row;
        row.k = k;
        row.step_norm = std::sqrt(s2);
        row.violation = op.violation() ? op.violation()(x) : row.step_norm;
        if (z)
            row.distance = distance(x, *z);
        row.sigma = uses_sigma_max(cfg.step_mode) ? sigma_max(op, x, ev, cfg.fixed_point_guard)
                                                  : std::get<ConstantStep>(cfg.step_mode).value;
        row.lambda = cfg.lambda_schedule(k);
        res.trace.rows.push_back(row);

        if (row.violation <= cfg.feasibility_tol) {
            res.trace.terminal_status = TerminalStatus::FeasibilityReached;
            break;
        }
        if (s2 <= cfg.fixed_point_guard) {
            res.trace.terminal_status = TerminalStatus::GuardTriggered;
            break;
        }
        if (k == cfg.max_iters) {
            res.trace.terminal_status = TerminalStatus::MaxIters;
            break;
        }
        if (!(row.lambda > 0.0 && row.lambda < 2.0))
            throw InvalidArgument("iterate: lambda_" + std::to_string(k) + " = " + std::to_string(row.lambda) +
                                  " outside (0,2)");

        Vector next = x;
        axpy(row.lambda * row.sigma, d, next);
        if (!all_finite(next))
            throw NumericalError("iterate: non-finite iterate at k = " + std::to_string(k + 1));

        if (z) {
            const double dk = row.distance;
            const double dk1 = distance(next, *z);
            if (cfg.assert_fejer && !(dk1 <= dk + fejer_slack))
                throw InvariantViolation("iterate: Fejer monotonicity failed at k = " + std::to_string(k) +
                                         ": |x^{k+1} - z| = " + std::to_string(dk1) +
                                         " > |x^k - z| = " + std::to_string(dk));
            const double lam = row.lambda;
            if (cfg.assert_error_bound && lam > 0.0 && lam < 1.0) {
                const double ek = dk * dk;
                const double decrease = ek - dk1 * dk1;
                const double bound = lam * (1.0 - lam) * s2 - 1e-9 * (1.0 + ek);
                if (!(decrease >= bound))
                    throw InvariantViolation("iterate: error decrease bound failed at k = " + std::to_string(k) +
                                             ": e_k - e_{k+1} = " + std::to_string(decrease) +
                                             " < " + std::to_string(bound));
            }
        }
        x = std::move(next);
    }
    res.x = std::move(x);
    return res;
}

// ---------------------------------------------------------------------------
// error-decrease bounds

/// Lower bound on e_k - e_{k+1} for sQNE strings: lambda (1 - lambda) s^2.
inline double sqne_error_bound(double lambda, double step_norm) {
    return lambda * (1.0 - lambda) * step_norm * step_norm;
}

/// Older bound for cutter operators over m operators:
/// lambda (2 - lambda) / (4 m^2) s^2.
inline double cutter_error_bound(double lambda, std::size_t m, double step_norm) {
    const double mm = static_cast<double>(m);
    return lambda * (2.0 - lambda) / (4.0 * mm * mm) * step_norm * step_norm;
}

struct ErrorBoundRow {
    std::size_t k = 0;
    double lambda = 0.0;
    double step_norm = 0.0;
    double realized_decrease = 0.0;  // e_k - e_{k+1}
    double sqne_bound = 0.0;
    double cutter_bound = 0.0;
    bool realized_meets_sqne_bound = true;  // only judged for lambda in (0,1)
    bool sqne_dominates = true;
};

struct ErrorBoundReport {
    std::vector<ErrorBoundRow> rows;
    bool all_sqne_bounds_met = true;
    bool sqne_dominates_everywhere = true;
};

/// Realized error decrease of a trace against both lower bounds, row by row.
inline ErrorBoundReport compare_error_bounds(const IterationTrace& trace, std::size_t m) {
    if (m < 1)
        throw InvalidArgument("compare_error_bounds: m must be at least 1");
    ErrorBoundReport report;
    for (std::size_t i = 0; i + 1 < trace.rows.size(); ++i) {
        const auto& cur = trace.rows[i];
        const auto& nxt = trace.rows[i + 1];
        if (std::isnan(cur.distance) || std::isnan(nxt.distance))
            throw InvalidArgument("compare_error_bounds: trace has no distance-to-reference column");
        ErrorBoundRow r;
        r.k = cur.k;
        r.lambda = cur.lambda;
        r.step_norm = cur.step_norm;
        const double ek = cur.distance * cur.distance;
        r.realized_decrease = ek - nxt.distance * nxt.distance;
        r.sqne_bound = sqne_error_bound(r.lambda, r.step_norm);
        r.cutter_bound = cutter_error_bound(r.lambda, m, r.step_norm);
        if (r.lambda > 0.0 && r.lambda < 1.0)
            r.realized_meets_sqne_bound = r.realized_decrease >= r.sqne_bound - 1e-9 * (1.0 + ek);
        r.sqne_dominates = r.sqne_bound >= r.cutter_bound;
        report.all_sqne_bounds_met = report.all_sqne_bounds_met && r.realized_meets_sqne_bound;
        report.sqne_dominates_everywhere = report.sqne_dominates_everywhere && r.sqne_dominates;
        report.rows.push_back(r);
    }
    return report;
}

}  // namespace sqne
