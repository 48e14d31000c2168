#pragma once

// Benchmark inequality systems: six classical test functions turned into
// constraint families g_i(x) <= 0, and seeded random convex quadratic systems
//
//   f_i(x) = |G_i x|^2 + c_i^T x + d_i,   d_i chosen so that f_i(y) = 0.

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "sqne/linear_block.hpp"
#include "sqne/matrix.hpp"
#include "sqne/subgradient.hpp"

namespace sqne {

enum class AppendixProblem {
    ExtendedPowell,
    ChainedWood,
    ExtendedRosenbrock,
    BroydenTridiagonal,
    Penalty1,
    VariablyDimensioned,
};

inline constexpr std::array<AppendixProblem, 6> kAppendixProblems = {
    AppendixProblem::ExtendedPowell,     AppendixProblem::ChainedWood, AppendixProblem::ExtendedRosenbrock,
    AppendixProblem::BroydenTridiagonal, AppendixProblem::Penalty1,    AppendixProblem::VariablyDimensioned,
};

inline std::string to_string(AppendixProblem p) {
    switch (p) {
        case AppendixProblem::ExtendedPowell: return "extended-powell";
        case AppendixProblem::ChainedWood: return "chained-wood";
        case AppendixProblem::ExtendedRosenbrock: return "extended-rosenbrock";
        case AppendixProblem::BroydenTridiagonal: return "broyden-tridiagonal";
        case AppendixProblem::Penalty1: return "penalty-1";
        case AppendixProblem::VariablyDimensioned: return "variably-dimensioned";
    }
    return "?";
}

inline AppendixProblem appendix_problem_from_string(const std::string& s) {
    for (auto p : kAppendixProblems)
        if (to_string(p) == s)
            return p;
    throw InvalidArgument("unknown appendix problem '" + s + "'");
}

/// Default number of variables for each classical problem.
inline std::size_t default_dimension(AppendixProblem p) {
    switch (p) {
        case AppendixProblem::ExtendedPowell: return 102;
        case AppendixProblem::ChainedWood: return 68;
        case AppendixProblem::ExtendedRosenbrock: return 101;
        case AppendixProblem::BroydenTridiagonal: return 200;
        case AppendixProblem::Penalty1: return 199;
        case AppendixProblem::VariablyDimensioned: return 198;
    }
    return 0;
}

/// Cap on the constraint count of the pattern-cycling families (Powell,
/// Wood, Rosenbrock).
inline constexpr long kMaxOpenEndedConstraints = 200;

/// Name of the pseudorandom scheme used by generate_random_qc. Recorded in
/// every manifest so instances can be regenerated elsewhere.
inline constexpr const char* kRandomGeneratorId = "mt19937_64/u53";

struct AppendixSource {
    AppendixProblem problem = AppendixProblem::ExtendedPowell;
    std::size_t n = 0;
    bool broyden_classical = false;
};

struct RandomQcSpec {
    std::size_t n = 300;
    std::size_t M = 200;
    std::uint64_t seed = 1;
    double entry_min = -10.0;
    double entry_max = 10.0;
    std::optional<Vector> anchor;  // all-ones when unset
    std::size_t memory_budget_bytes = std::size_t{1} << 30;

    /// Desk-scale preset used in CI.
    static RandomQcSpec small(std::uint64_t seed) {
        RandomQcSpec s;
        s.n = 50;
        s.M = 40;
        s.seed = seed;
        return s;
    }
};

using ProblemSource = std::variant<AppendixSource, RandomQcSpec>;

struct TestProblemInstance {
    std::string name;
    std::size_t n = 0;
    std::vector<ConvexFunctionOracle> oracles;
    Vector x0;
    std::optional<Vector> known_feasible_point;
    std::vector<std::vector<std::size_t>> block_layout;  // default: 4 blocks
    bool convex = true;  // false for the classical Broyden variant
    ProblemSource source;
    std::vector<std::string> warnings;

    std::size_t constraint_count() const { return oracles.size(); }

    double max_violation(ConstView x) const {
        double m = 0.0;
        for (const auto& o : oracles)
            m = std::max(m, plus_part(o.value(x)));
        return m;
    }
};

namespace detail {

// 1-based access with an optional zero boundary x_0 = x_{n+1} = 0.
struct Var {
    ConstView x;
    bool zero_boundary = false;
    double operator()(std::size_t j) const {
        if (j >= 1 && j <= x.size())
            return x[j - 1];
        if (zero_boundary && (j == 0 || j == x.size() + 1))
            return 0.0;
        throw InvalidArgument(fmt::format("variable index {} outside 1..{}", j, x.size()));
    }
};

// Adds c to component j (1-based) unless j is a boundary index.
inline void add_grad(Vector& g, std::size_t j, double c) {
    if (j >= 1 && j <= g.size())
        g[j - 1] += c;
}

// One constraint family member: its variable references (for range checks)
// and value/gradient in terms of 1-based variables.
struct Term {
    std::vector<long> refs;
    std::function<double(const Var&)> value;
    std::function<void(const Var&, Vector&)> grad;
};

inline ConvexFunctionOracle make_oracle(Term term, bool zero_boundary, std::string label) {
    auto shared = std::make_shared<const Term>(std::move(term));
    ConvexFunctionOracle o;
    o.label = std::move(label);
    o.value = [shared, zero_boundary](ConstView x) { return shared->value(Var{x, zero_boundary}); };
    o.subgrad = [shared, zero_boundary](ConstView x) {
        Vector g(x.size(), 0.0);
        shared->grad(Var{x, zero_boundary}, g);
        return g;
    };
    return o;
}

inline long div_floor(long i, long l) { return i / l; }  // operands are positive
inline long mod_pos(long i, long l) { return i % l; }

// Term i (1-based) of each family; nullopt once i exceeds a fixed family size.
inline std::optional<Term> appendix_term(AppendixProblem p, long i, long n, bool classical) {
    const double s5 = std::sqrt(5.0), s10 = std::sqrt(10.0), s90 = std::sqrt(90.0), s1000 = std::sqrt(1000.0);
    auto u = [](long j) { return static_cast<std::size_t>(j); };
    switch (p) {
        case AppendixProblem::ExtendedPowell: {
            const long j = 2 * div_floor(i + 3, 4) - 1;
            switch (mod_pos(i, 4)) {
                case 1:
                    return Term{{j, j + 1}, [=](const Var& x) { return x(u(j)) + 10.0 * x(u(j + 1)); },
                                [=](const Var&, Vector& g) {
                                    add_grad(g, u(j), 1.0);
                                    add_grad(g, u(j + 1), 10.0);
                                }};
                case 2:
                    return Term{{j + 2, j + 3}, [=](const Var& x) { return s5 * (x(u(j + 2)) - x(u(j + 3))); },
                                [=](const Var&, Vector& g) {
                                    add_grad(g, u(j + 2), s5);
                                    add_grad(g, u(j + 3), -s5);
                                }};
                case 3:
                    return Term{{j + 1, j + 2},
                                [=](const Var& x) {
                                    const double v = x(u(j + 1)) - 2.0 * x(u(j + 2));
                                    return v * v;
                                },
                                [=](const Var& x, Vector& g) {
                                    const double v = x(u(j + 1)) - 2.0 * x(u(j + 2));
                                    add_grad(g, u(j + 1), 2.0 * v);
                                    add_grad(g, u(j + 2), -4.0 * v);
                                }};
                default:
                    return Term{{j, j + 3},
                                [=](const Var& x) {
                                    const double v = x(u(j)) - x(u(j + 3));
                                    return s10 * v * v;
                                },
                                [=](const Var& x, Vector& g) {
                                    const double v = x(u(j)) - x(u(j + 3));
                                    add_grad(g, u(j), 2.0 * s10 * v);
                                    add_grad(g, u(j + 3), -2.0 * s10 * v);
                                }};
            }
        }
        case AppendixProblem::ChainedWood: {
            const long j = 2 * (div_floor(i, 6) + 1);
            switch (mod_pos(i, 6)) {
                case 1:
                    return Term{{j - 1, j},
                                [=](const Var& x) { return 10.0 * (x(u(j - 1)) * x(u(j - 1)) - x(u(j))); },
                                [=](const Var& x, Vector& g) {
                                    add_grad(g, u(j - 1), 20.0 * x(u(j - 1)));
                                    add_grad(g, u(j), -10.0);
                                }};
                case 2:
                    return Term{{j - 1}, [=](const Var& x) { return x(u(j - 1)) - 1.0; },
                                [=](const Var&, Vector& g) { add_grad(g, u(j - 1), 1.0); }};
                case 3:
                    return Term{{j + 1, j + 2},
                                [=](const Var& x) { return s90 * (x(u(j + 1)) * x(u(j + 1)) - x(u(j + 2))); },
                                [=](const Var& x, Vector& g) {
                                    add_grad(g, u(j + 1), 2.0 * s90 * x(u(j + 1)));
                                    add_grad(g, u(j + 2), -s90);
                                }};
                case 4:
                    return Term{{j + 1}, [=](const Var& x) { return x(u(j + 1)) - 1.0; },
                                [=](const Var&, Vector& g) { add_grad(g, u(j + 1), 1.0); }};
                case 5:
                    return Term{{j, j + 2}, [=](const Var& x) { return s10 * (2.0 - x(u(j)) - x(u(j + 2))); },
                                [=](const Var&, Vector& g) {
                                    add_grad(g, u(j), -s10);
                                    add_grad(g, u(j + 2), -s10);
                                }};
                default:
                    return Term{{j, j + 2}, [=](const Var& x) { return (x(u(j + 2)) - x(u(j))) / s10; },
                                [=](const Var&, Vector& g) {
                                    add_grad(g, u(j + 2), 1.0 / s10);
                                    add_grad(g, u(j), -1.0 / s10);
                                }};
            }
        }
        case AppendixProblem::ExtendedRosenbrock: {
            const long j = div_floor(i + 1, 2);
            if (mod_pos(i, 2) == 1)
                return Term{{j, j + 1}, [=](const Var& x) { return 10.0 * (x(u(j)) * x(u(j)) - x(u(j + 1))); },
                            [=](const Var& x, Vector& g) {
                                add_grad(g, u(j), 20.0 * x(u(j)));
                                add_grad(g, u(j + 1), -10.0);
                            }};
            return Term{{j}, [=](const Var& x) { return x(u(j)) - 1.0; },
                        [=](const Var&, Vector& g) { add_grad(g, u(j), 1.0); }};
        }
        case AppendixProblem::BroydenTridiagonal: {
            if (i > n)
                return std::nullopt;
            const long j = i;
            if (classical)
                return Term{{j - 1, j, j + 1},
                            [=](const Var& x) {
                                return (3.0 - 2.0 * x(u(j))) * x(u(j)) - x(u(j - 1)) - 2.0 * x(u(j + 1)) + 1.0;
                            },
                            [=](const Var& x, Vector& g) {
                                add_grad(g, u(j), 3.0 - 4.0 * x(u(j)));
                                add_grad(g, u(j - 1), -1.0);
                                add_grad(g, u(j + 1), -2.0);
                            }};
            return Term{{j - 1, j, j + 1},
                        [=](const Var& x) { return (3.0 - 2.0 * x(u(j))) - x(u(j - 1)) - 2.0 * x(u(j + 1)) + 1.0; },
                        [=](const Var&, Vector& g) {
                            add_grad(g, u(j), -2.0);
                            add_grad(g, u(j - 1), -1.0);
                            add_grad(g, u(j + 1), -2.0);
                        }};
        }
        case AppendixProblem::Penalty1: {
            if (i > n + 1)
                return std::nullopt;
            if (i <= n) {
                const long j = i;
                return Term{{j}, [=](const Var& x) { return x(u(j)) - 1.0; },
                            [=](const Var&, Vector& g) { add_grad(g, u(j), 1.0); }};
            }
            return Term{{1, n},
                        [=](const Var& x) {
                            double s = 0.0;
                            for (long j = 1; j <= n; ++j)
                                s += x(u(j)) * x(u(j)) - 0.25;
                            return s / s1000;
                        },
                        [=](const Var& x, Vector& g) {
                            for (long j = 1; j <= n; ++j)
                                add_grad(g, u(j), 2.0 * x(u(j)) / s1000);
                        }};
        }
        case AppendixProblem::VariablyDimensioned: {
            if (i > n + 2)
                return std::nullopt;
            if (i <= n) {
                const long j = i;
                return Term{{j}, [=](const Var& x) { return x(u(j)) - 1.0; },
                            [=](const Var&, Vector& g) { add_grad(g, u(j), 1.0); }};
            }
            if (i == n + 1)
                return Term{{1, n},
                            [=](const Var& x) {
                                double s = 0.0;
                                for (long j = 1; j <= n; ++j)
                                    s += static_cast<double>(j) * (x(u(j)) - 1.0);
                                return s;
                            },
                            [=](const Var&, Vector& g) {
                                for (long j = 1; j <= n; ++j)
                                    add_grad(g, u(j), static_cast<double>(j));
                            }};
            // (sum_j j (x_j - 1)^2)^2, squared as printed
            return Term{{1, n},
                        [=](const Var& x) {
                            double s = 0.0;
                            for (long j = 1; j <= n; ++j)
                                s += static_cast<double>(j) * (x(u(j)) - 1.0) * (x(u(j)) - 1.0);
                            return s * s;
                        },
                        [=](const Var& x, Vector& g) {
                            double s = 0.0;
                            for (long j = 1; j <= n; ++j)
                                s += static_cast<double>(j) * (x(u(j)) - 1.0) * (x(u(j)) - 1.0);
                            for (long j = 1; j <= n; ++j)
                                add_grad(g, u(j), 4.0 * s * static_cast<double>(j) * (x(u(j)) - 1.0));
                        }};
        }
    }
    return std::nullopt;
}

// Families whose size is fixed by n (the others cycle through a pattern).
inline bool fixed_size_family(AppendixProblem p) {
    return p == AppendixProblem::BroydenTridiagonal || p == AppendixProblem::Penalty1 ||
           p == AppendixProblem::VariablyDimensioned;
}

inline bool has_zero_boundary(AppendixProblem p) {
    return p == AppendixProblem::BroydenTridiagonal || p == AppendixProblem::Penalty1;
}

inline Vector appendix_start(AppendixProblem p, std::size_t n) {
    Vector x(n);
    for (std::size_t l = 1; l <= n; ++l) {
        double v = 0.0;
        switch (p) {
            case AppendixProblem::ExtendedPowell: {
                constexpr double pattern[4] = {1.0, 3.0, -1.0, 0.0};  // indexed by l mod 4
                v = pattern[l % 4];
                break;
            }
            case AppendixProblem::ChainedWood:
                if (l <= 4)
                    v = (l % 2 == 1) ? -3.0 : -1.0;
                else
                    v = (l % 2 == 1) ? -2.0 : 0.0;
                break;
            case AppendixProblem::ExtendedRosenbrock: v = (l % 2 == 1) ? -1.2 : -1.0; break;
            case AppendixProblem::BroydenTridiagonal: v = -1.0; break;
            case AppendixProblem::Penalty1: v = static_cast<double>(l); break;
            case AppendixProblem::VariablyDimensioned: v = 1.0 - static_cast<double>(l) / static_cast<double>(n); break;
        }
        x[l - 1] = v;
    }
    return x;
}

inline Vector appendix_feasible_point(AppendixProblem p, std::size_t n) {
    switch (p) {
        case AppendixProblem::ExtendedPowell:
        case AppendixProblem::Penalty1: return Vector(n, 0.0);
        case AppendixProblem::BroydenTridiagonal: return Vector(n, 2.0);
        default: return Vector(n, 1.0);
    }
}

}  // namespace detail

/// Contiguous split of M constraints into E blocks, remainder spread over
/// the leading blocks.
inline std::vector<std::vector<std::size_t>> default_block_layout(std::size_t M, std::size_t E) {
    return contiguous_blocks(M, E);
}

/// Builds one of the six classical systems. Broyden, Penalty 1 and Variably
/// dimensioned have n, n + 1 and n + 2 constraints. The pattern-cycling
/// families take the largest count M <= 200 for which every referenced
/// variable lies in 1..n (or on the declared zero boundary x_0 = x_{n+1} = 0).
inline TestProblemInstance build_appendix_problem(AppendixProblem p, std::optional<std::size_t> n_override = {},
                                                  bool broyden_classical = false) {
    const std::size_t n = n_override.value_or(default_dimension(p));
    if (n < 2)
        throw InvalidArgument("build_appendix_problem: n must be at least 2");
    const bool boundary = detail::has_zero_boundary(p);
    const long lo = boundary ? 0 : 1;
    const long hi = static_cast<long>(n) + (boundary ? 1 : 0);
    const bool classical = broyden_classical && p == AppendixProblem::BroydenTridiagonal;

    TestProblemInstance inst;
    inst.name = to_string(p) + (classical ? "-classical" : "");
    inst.n = n;
    for (long i = 1; i <= kMaxOpenEndedConstraints || detail::fixed_size_family(p); ++i) {
        auto term = detail::appendix_term(p, i, static_cast<long>(n), classical);
        if (!term)
            break;
        const auto bad = std::find_if(term->refs.begin(), term->refs.end(), [&](long j) { return j < lo || j > hi; });
        if (bad != term->refs.end()) {
            if (i == 1)
                throw InvalidArgument(fmt::format("build_appendix_problem: {} with n = {}: constraint i = 1 "
                                                  "references x_{} outside 1..{}",
                                                  to_string(p), n, *bad, n));
            break;
        }
        inst.oracles.push_back(detail::make_oracle(std::move(*term), boundary, fmt::format("{}[{}]", inst.name, i)));
    }
    inst.x0 = detail::appendix_start(p, n);
    inst.known_feasible_point = detail::appendix_feasible_point(p, n);
    inst.convex = !classical;
    inst.source = AppendixSource{p, n, classical};
    if (inst.oracles.size() >= 4)
        inst.block_layout = default_block_layout(inst.oracles.size(), 4);
    else
        inst.block_layout = default_block_layout(inst.oracles.size(), 1);
    if (inst.oracles.size() % 4 != 0)
        inst.warnings.push_back(fmt::format("{}: M = {} is not divisible by 4; leading blocks are larger", inst.name,
                                            inst.oracles.size()));
    return inst;
}

namespace detail {

struct QuadraticData {
    std::size_t n = 0;
    std::vector<DenseMatrix> G;
    std::vector<Vector> c;
    Vector d;
};

// u in [0,1) from the top 53 bits of one 64-bit draw.
inline double uniform53(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double quadratic_value(const QuadraticData& q, std::size_t i, ConstView x) {
    const Vector gx = multiply(q.G[i], x);
    const double s = norm2(gx) + dot(q.c[i], x);
    return s + q.d[i];
}

}  // namespace detail

/// Seeded random convex quadratic system. G_i (row-major) and then c_i are
/// drawn for i = 1..M in that order from mt19937_64, followed by the starting
/// point x0; each entry is entry_min + (entry_max - entry_min) * u with
/// u = (draw >> 11) * 2^-53.
inline TestProblemInstance generate_random_qc(const RandomQcSpec& spec) {
    if (spec.n < 1 || spec.M < 1)
        throw InvalidArgument("generate_random_qc: n and M must be positive");
    if (!(spec.entry_max > spec.entry_min))
        throw InvalidArgument("generate_random_qc: empty entry range");
    const Vector y = spec.anchor.value_or(Vector(spec.n, 1.0));
    if (y.size() != spec.n)
        throw InvalidArgument("generate_random_qc: anchor has wrong dimension");

    TestProblemInstance inst;
    const std::size_t bytes = spec.n * spec.n * spec.M * sizeof(double);
    if (bytes > spec.memory_budget_bytes)
        inst.warnings.push_back(fmt::format("random-qc: {} MiB of matrix storage exceeds the {} MiB budget",
                                            bytes >> 20, spec.memory_budget_bytes >> 20));

    auto data = std::make_shared<detail::QuadraticData>();
    data->n = spec.n;
    std::mt19937_64 rng(spec.seed);
    const double width = spec.entry_max - spec.entry_min;
    for (std::size_t i = 0; i < spec.M; ++i) {
        DenseMatrix G(spec.n, spec.n);
        for (std::size_t r = 0; r < spec.n; ++r)
            for (std::size_t c = 0; c < spec.n; ++c)
                G(r, c) = spec.entry_min + width * detail::uniform53(rng);
        Vector ci(spec.n);
        for (double& v : ci)
            v = spec.entry_min + width * detail::uniform53(rng);
        data->G.push_back(std::move(G));
        data->c.push_back(std::move(ci));
    }
    Vector x0(spec.n);
    for (double& v : x0)
        v = spec.entry_min + width * detail::uniform53(rng);
    data->d.assign(spec.M, 0.0);
    for (std::size_t i = 0; i < spec.M; ++i) {
        const Vector gy = multiply(data->G[i], y);
        data->d[i] = -(norm2(gy) + dot(data->c[i], y));
    }

    std::shared_ptr<const detail::QuadraticData> q = data;
    inst.name = fmt::format("random-qc-n{}-M{}-seed{}", spec.n, spec.M, spec.seed);
    inst.n = spec.n;
    for (std::size_t i = 0; i < spec.M; ++i) {
        ConvexFunctionOracle o;
        o.label = fmt::format("f[{}]", i + 1);
        o.value = [q, i](ConstView x) { return detail::quadratic_value(*q, i, x); };
        o.subgrad = [q, i](ConstView x) {
            const Vector gx = multiply(q->G[i], x);
            Vector g = q->c[i];
            for (std::size_t r = 0; r < q->n; ++r)
                q->G[i].add_scaled_row(r, 2.0 * gx[r], g);
            return g;
        };
        inst.oracles.push_back(std::move(o));
    }
    inst.x0 = std::move(x0);
    inst.known_feasible_point = y;
    inst.block_layout = default_block_layout(spec.M, std::min<std::size_t>(4, spec.M));
    inst.source = spec;
    return inst;
}

/// Block system with E contiguous blocks and equal intra-block weights.
inline std::shared_ptr<const InequalityBlockSystem> make_block_system(const TestProblemInstance& inst,
                                                                      std::size_t E) {
    if (E == 0 || E > inst.constraint_count())
        throw InvalidArgument(fmt::format("default_string_plan: cannot form {} blocks from {} constraints", E,
                                          inst.constraint_count()));
    return std::make_shared<const InequalityBlockSystem>(
        InequalityBlockSystem::uniform(inst.n, inst.oracles, default_block_layout(inst.constraint_count(), E)));
}

/// E length-one strings, string t being the parallel subgradient projection
/// over block t; string weights 1/E and intra-block weights 1/|B_t|.
inline AveragedOperator default_string_plan(const TestProblemInstance& inst, std::size_t E) {
    return assemble_block_strings(make_block_system(inst, E), inst.known_feasible_point);
}

// ---------------------------------------------------------------------------
// manifest

/// Plain "key = value" lines sufficient to rebuild the instance exactly.
inline void write_manifest(std::ostream& out, const TestProblemInstance& inst) {
    out << "name = " << inst.name << "\n";
    out << "n = " << inst.n << "\n";
    out << "M = " << inst.constraint_count() << "\n";
    std::string sizes;
    for (std::size_t t = 0; t < inst.block_layout.size(); ++t)
        sizes += (t ? "," : "") + std::to_string(inst.block_layout[t].size());
    out << "blocks = " << sizes << "\n";
    if (auto a = std::get_if<AppendixSource>(&inst.source)) {
        out << "kind = appendix\n";
        out << "problem = " << to_string(a->problem) << "\n";
        out << "broyden_classical = " << (a->broyden_classical ? "true" : "false") << "\n";
    } else {
        const auto& r = std::get<RandomQcSpec>(inst.source);
        out << "kind = random-qc\n";
        out << "seed = " << r.seed << "\n";
        out << fmt::format("entry_min = {:.17g}\nentry_max = {:.17g}\n", r.entry_min, r.entry_max);
        out << "generator = " << kRandomGeneratorId << "\n";
        if (r.anchor) {
            out << "anchor =";
            for (double v : *r.anchor)
                out << fmt::format(" {:.17g}", v);
            out << "\n";
        }
    }
}

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument(fmt::format("manifest line {}: expected 'key = value'", lineno));
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline TestProblemInstance read_manifest(std::istream& in) {
    const auto kv = parse_key_values(in);
    auto get = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end())
            throw InvalidArgument("manifest: missing field '" + k + "'");
        return it->second;
    };
    const std::size_t n = std::stoul(get("n"));
    TestProblemInstance inst;
    if (get("kind") == "appendix") {
        inst = build_appendix_problem(appendix_problem_from_string(get("problem")), n,
                                      get("broyden_classical") == "true");
    } else if (get("kind") == "random-qc") {
        if (get("generator") != kRandomGeneratorId)
            throw InvalidArgument("manifest: unsupported generator '" + get("generator") + "'");
        RandomQcSpec spec;
        spec.n = n;
        spec.M = std::stoul(get("M"));
        spec.seed = std::stoull(get("seed"));
        spec.entry_min = std::stod(get("entry_min"));
        spec.entry_max = std::stod(get("entry_max"));
        if (kv.count("anchor")) {
            std::istringstream as(kv.at("anchor"));
            Vector a;
            double v;
            while (as >> v)
                a.push_back(v);
            spec.anchor = a;
        }
        inst = generate_random_qc(spec);
    } else {
        throw InvalidArgument("manifest: unknown kind '" + get("kind") + "'");
    }
    if (std::stoul(get("M")) != inst.constraint_count())
        throw InvalidArgument("manifest: constraint count does not match the rebuilt instance");
    std::vector<std::size_t> sizes;
    std::istringstream bs(get("blocks"));
    std::string tok;
    while (std::getline(bs, tok, ','))
        sizes.push_back(std::stoul(tok));
    std::size_t next = 0;
    inst.block_layout.clear();
    for (std::size_t s : sizes) {
        std::vector<std::size_t> blk;
        for (std::size_t k = 0; k < s; ++k)
            blk.push_back(next++);
        inst.block_layout.push_back(std::move(blk));
    }
    if (next != inst.constraint_count())
        throw InvalidArgument("manifest: block sizes do not add up to M");
    return inst;
}

}  // namespace sqne
