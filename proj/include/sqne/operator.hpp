#pragma once

// Operator abstraction for fixed-point methods on R^n, the relaxation
// transforms, and sampling-based checks of the quasi-nonexpansive classes.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sqne/linalg.hpp"

namespace sqne {

using EvalFunction = std::function<Vector(ConstView)>;
using FixTest = std::function<bool(ConstView)>;
using StepSizeFunction = std::function<double(ConstView)>;

/// Default tolerance for "z is a fixed point": 1e-12 * (1 + |z|).
inline double default_fix_tol(ConstView z) { return 1e-12 * (1.0 + norm(z)); }

/// An evaluable map x -> T(x) on R^dim. Immutable once built; copies share
/// the captured state, so a handle can be evaluated from several threads.
class OperatorHandle {
public:
    OperatorHandle() = default;

    OperatorHandle(std::size_t dim, EvalFunction eval, FixTest fix_test = {},
                   std::optional<Vector> reference_fixed_point = std::nullopt, std::string label = {})
        : dim_(dim),
          eval_(std::move(eval)),
          fix_test_(std::move(fix_test)),
          reference_(std::move(reference_fixed_point)),
          label_(std::move(label)) {
        if (dim_ == 0)
            throw InvalidArgument("OperatorHandle: dimension must be positive");
        if (!eval_)
            throw InvalidArgument("OperatorHandle: missing evaluation function");
        if (reference_) {
            if (reference_->size() != dim_)
                throw InvalidArgument("OperatorHandle: reference fixed point has wrong dimension");
            const double gap = distance((*this)(*reference_), *reference_);
            if (gap > default_fix_tol(*reference_))
                throw InvalidArgument("OperatorHandle '" + label_ +
                                      "': reference point is not a fixed point (|T(z)-z| = " +
                                      std::to_string(gap) + ")");
        }
    }

    std::size_t dim() const { return dim_; }
    const std::string& label() const { return label_; }
    const std::optional<Vector>& reference_fixed_point() const { return reference_; }
    const FixTest& fix_test_function() const { return fix_test_; }

    Vector operator()(ConstView x) const {
        if (x.size() != dim_)
            throw InvalidArgument("operator '" + label_ + "': input has dimension " +
                                  std::to_string(x.size()) + ", expected " + std::to_string(dim_));
        Vector y = eval_(x);
        if (y.size() != dim_)
            throw NumericalError("operator '" + label_ + "': output has wrong dimension");
        if (!all_finite(y))
            throw NumericalError("operator '" + label_ + "': non-finite output");
        return y;
    }

    /// Membership in Fix T. Falls back to |T(x) - x| <= default_fix_tol(x)
    /// when no explicit predicate was supplied.
    bool is_fixed_point(ConstView x) const {
        if (fix_test_)
            return fix_test_(x);
        return distance((*this)(x), x) <= default_fix_tol(x);
    }

private:
    std::size_t dim_ = 0;
    EvalFunction eval_;
    FixTest fix_test_;
    std::optional<Vector> reference_;
    std::string label_;
};

struct ConstantStep {
    double value = 1.0;
};
struct SigmaMaxStep {};
using StepMode = std::variant<ConstantStep, SigmaMaxStep>;

inline bool uses_sigma_max(const StepMode& mode) { return std::holds_alternative<SigmaMaxStep>(mode); }

struct RelaxationSpec {
    double lambda = 1.0;
    StepMode step_mode = ConstantStep{1.0};

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 2.0))
            throw InvalidArgument("relaxation parameter must lie in [0,2], got " + std::to_string(lambda));
        if (auto c = std::get_if<ConstantStep>(&step_mode); c && !(c->value > 0.0))
            throw InvalidArgument("constant step size must be positive");
    }
};

/// T_alpha = (1 - alpha) Id + alpha T, alpha in (0,1]. Fix T_alpha = Fix T.
inline OperatorHandle relax(const OperatorHandle& op, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw InvalidArgument("relax: alpha must lie in (0,1], got " + std::to_string(alpha));
    auto eval = [op, alpha](ConstView x) {
        Vector t = op(x);
        if (alpha == 1.0)
            return t;
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = (1.0 - alpha) * x[i] + alpha * t[i];
        return t;
    };
    return OperatorHandle(op.dim(), eval, op.fix_test_function(), op.reference_fixed_point(),
                          op.label() + "~relax");
}

/// x -> x + lambda * sigma(x) * (T(x) - x).
///
/// With an empty `sigma` the step comes from spec.step_mode, which must then
/// be ConstantStep: sigma_max is only defined for averaged string operators
/// and is handled by the string-averaging driver.
inline OperatorHandle generalized_relax(const OperatorHandle& op, const RelaxationSpec& spec,
                                        StepSizeFunction sigma = {}) {
    spec.validate();
    if (!sigma) {
        const auto* c = std::get_if<ConstantStep>(&spec.step_mode);
        if (!c)
            throw InvalidArgument("generalized_relax: sigma_max needs an averaged operator; pass a step function");
        const double v = c->value;
        sigma = [v](ConstView) { return v; };
    }
    const double lambda = spec.lambda;
    auto eval = [op, lambda, sigma](ConstView x) {
        if (lambda == 0.0)
            return Vector(x.begin(), x.end());
        const double s = sigma(x);
        if (!std::isfinite(s) || s <= 0.0)
            throw NumericalError("generalized_relax: step size must be positive and finite, got " +
                                 std::to_string(s));
        Vector t = op(x);
        const double step = lambda * s;
        if (step == 1.0)
            return t;
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = x[i] + step * (t[i] - x[i]);
        return t;
    };
    // lambda == 0 turns the operator into the identity, whose fixed set is everything.
    if (lambda == 0.0)
        return OperatorHandle(op.dim(), eval, [](ConstView) { return true; }, op.reference_fixed_point(),
                              op.label() + "~identity");
    return OperatorHandle(op.dim(), eval, op.fix_test_function(), op.reference_fixed_point(),
                          op.label() + "~genrelax");
}

// ---------------------------------------------------------------------------
// metric projections

/// Projection onto {x : <a, x> <= beta}.
inline OperatorHandle halfspace_projection(Vector a, double beta) {
    const double aa = norm2(a);
    if (!(aa > 0.0))
        throw InvalidArgument("halfspace_projection: normal vector must be nonzero");
    const std::size_t n = a.size();
    auto eval = [a, beta, aa](ConstView x) {
        Vector y(x.begin(), x.end());
        const double excess = dot(a, x) - beta;
        if (excess > 0.0)
            axpy(-excess / aa, a, y);
        return y;
    };
    auto fix = [a, beta](ConstView x) { return dot(a, x) - beta <= 1e-12 * (1.0 + std::abs(beta)); };
    return OperatorHandle(n, eval, fix, std::nullopt, "halfspace");
}

/// Projection onto the closed ball B(center, radius).
inline OperatorHandle ball_projection(Vector center, double radius) {
    if (!(radius > 0.0))
        throw InvalidArgument("ball_projection: radius must be positive");
    const std::size_t n = center.size();
    auto eval = [center, radius](ConstView x) {
        Vector d = subtract(x, center);
        const double r = norm(d);
        if (r <= radius)
            return Vector(x.begin(), x.end());
        Vector y = center;
        axpy(radius / r, d, y);
        return y;
    };
    auto fix = [center, radius](ConstView x) { return distance(x, center) <= radius * (1.0 + 1e-12); };
    return OperatorHandle(n, eval, fix, std::nullopt, "ball");
}

// ---------------------------------------------------------------------------
// property checks

enum class OperatorProperty { QNE, SQNE, Cutter };

inline const char* to_string(OperatorProperty p) {
    switch (p) {
        case OperatorProperty::QNE: return "QNE";
        case OperatorProperty::SQNE: return "SQNE";
        case OperatorProperty::Cutter: return "Cutter";
    }
    return "?";
}

struct PropertyViolation {
    Vector x;
    Vector z;
    double margin;  // > 0 means the defining inequality failed by this amount
};

struct PropertyCheckReport {
    OperatorProperty property = OperatorProperty::QNE;
    std::size_t sample_count = 0;
    std::vector<PropertyViolation> violations;
    bool passed = true;
};

/// Sampling certificate for one of the operator classes. Each (x, z) pair is
/// checked against
///   QNE:    |T(x) - z| <= |x - z| + tol
///   SQNE:   |T(x) - z| <  |x - z| - tol   whenever |T(x) - x| > tol
///   Cutter: <x - T(x), z - T(x)> <= tol
/// `tol` defaults to 1e-8 * (1 + |x|) per sample.
inline PropertyCheckReport check_property(const OperatorHandle& op, OperatorProperty property,
                                          const std::vector<Vector>& samples, const std::vector<Vector>& zs,
                                          std::optional<double> tol = std::nullopt) {
    if (samples.empty())
        throw InvalidArgument("check_property: no samples");
    for (std::size_t j = 0; j < zs.size(); ++j)
        if (!op.is_fixed_point(zs[j]))
            throw InvalidArgument("check_property: zs[" + std::to_string(j) + "] is not a fixed point of '" +
                                  op.label() + "'");

    PropertyCheckReport report;
    report.property = property;
    for (const auto& x : samples) {
        const Vector tx = op(x);
        const double t = tol.value_or(1e-8 * (1.0 + norm(x)));
        for (const auto& z : zs) {
            ++report.sample_count;
            double margin = 0.0;
            bool bad = false;
            switch (property) {
                case OperatorProperty::QNE:
                    margin = distance(tx, z) - distance(x, z);
                    bad = margin > t;
                    break;
                case OperatorProperty::SQNE:
                    if (distance(tx, x) <= t)
                        continue;
                    margin = distance(tx, z) - distance(x, z) + t;
                    bad = margin >= 0.0;
                    break;
                case OperatorProperty::Cutter:
                    margin = dot(subtract(x, tx), subtract(z, tx));
                    bad = margin > t;
                    break;
            }
            if (bad)
                report.violations.push_back({x, z, margin});
        }
    }
    report.passed = report.violations.empty();
    return report;
}

}  // namespace sqne
