#pragma once

// Dense vector helpers shared by every module. Vectors are plain
// std::vector<double>; read-only arguments are taken as spans.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqne {

using Vector = std::vector<double>;
using ConstView = std::span<const double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input to an operation (wrong size, out-of-range parameter, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Non-finite values, degenerate directions, non-convergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A runtime-checked inequality failed (Fejer monotonicity, sigma bound, ...).
class InvariantViolation : public Error {
public:
    using Error::Error;
};

inline void require_same_size(ConstView a, ConstView b, const char* where) {
    if (a.size() != b.size())
        throw InvalidArgument(std::string(where) + ": dimension mismatch (" +
                              std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

inline double dot(ConstView a, ConstView b) {
    require_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

inline double norm2(ConstView a) { return dot(a, a); }

inline double norm(ConstView a) { return std::sqrt(norm2(a)); }

inline double max_abs(ConstView a) {
    double m = 0.0;
    for (double v : a)
        m = std::max(m, std::abs(v));
    return m;
}

inline Vector subtract(ConstView a, ConstView b) {
    require_same_size(a, b, "subtract");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        r[i] = a[i] - b[i];
    return r;
}

inline double distance(ConstView a, ConstView b) { return norm(subtract(a, b)); }

inline double distance2(ConstView a, ConstView b) { return norm2(subtract(a, b)); }

/// y += alpha * x
inline void axpy(double alpha, ConstView x, std::span<double> y) {
    if (x.size() != y.size())
        throw InvalidArgument("axpy: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] += alpha * x[i];
}

inline bool all_finite(ConstView a) {
    for (double v : a)
        if (!std::isfinite(v))
            return false;
    return true;
}

}  // namespace sqne
