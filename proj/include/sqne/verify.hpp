#pragma once

// Numerical certificates used by the `verify` command and the test suites:
// finite-difference gradient checks, sampled convexity checks and sampled
// quasi-nonexpansiveness of every operator in a pool.

#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sqne/operator.hpp"
#include "sqne/string_averaging.hpp"
#include "sqne/subgradient.hpp"

namespace sqne {

/// Central finite differences with step h = 1e-6 (1 + |x|).
inline Vector finite_difference_gradient(const std::function<double(ConstView)>& f, ConstView x) {
    const double h = 1e-6 * (1.0 + norm(x));
    Vector g(x.size());
    Vector xp(x.begin(), x.end());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double keep = xp[j];
        xp[j] = keep + h;
        const double fp = f(xp);
        xp[j] = keep - h;
        const double fm = f(xp);
        xp[j] = keep;
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// |l(x) - fd(x)| <= rel_tol * max(1, |l(x)|).
inline bool gradient_matches_fd(const ConvexFunctionOracle& o, ConstView x, double rel_tol = 1e-5,
                                double* error_out = nullptr) {
    const Vector g = o.subgrad(x);
    const Vector fd = finite_difference_gradient(o.value, x);
    const double err = distance(g, fd) / std::max(1.0, norm(g));
    if (error_out)
        *error_out = err;
    return err <= rel_tol;
}

/// g(x) >= g(y) + <l(y), x - y> - tol (1 + |g(x)| + |g(y)|).
inline bool subgradient_inequality_holds(const ConvexFunctionOracle& o, ConstView x, ConstView y,
                                         double tol = 1e-9) {
    const double gx = o.value(x), gy = o.value(y);
    const double rhs = gy + dot(o.subgrad(y), subtract(x, y));
    return gx >= rhs - tol * (1.0 + std::abs(gx) + std::abs(gy));
}

/// Points z + r u with u uniform in [-1,1]^n, scaled by `radius`.
inline std::vector<Vector> sample_around(ConstView center, double radius, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Vector> out;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        Vector x(center.begin(), center.end());
        for (double& v : x)
            v += radius * unit(rng);
        out.push_back(std::move(x));
    }
    return out;
}

struct CheckLine {
    std::string name;
    bool passed = true;
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckLine> lines;
    bool passed() const {
        for (const auto& l : lines)
            if (!l.passed)
                return false;
        return true;
    }
};

/// QNE check of every pool operator against z on `samples`.
inline void verify_pool_qne(const AveragedOperator& op, ConstView z, const std::vector<Vector>& samples,
                            VerifyReport& report) {
    for (std::size_t i = 0; i < op.pool().size(); ++i) {
        const auto& T = op.pool()[i];
        const auto r = check_property(T, OperatorProperty::QNE, samples, {Vector(z.begin(), z.end())});
        double worst = 0.0;
        for (const auto& v : r.violations)
            worst = std::max(worst, v.margin);
        report.lines.push_back({fmt::format("QNE {}", T.label()), r.passed,
                                fmt::format("{} pairs, {} violations{}", r.sample_count, r.violations.size(),
                                            r.passed ? "" : fmt::format(", worst margin {:.3g}", worst))});
    }
}

}  // namespace sqne
