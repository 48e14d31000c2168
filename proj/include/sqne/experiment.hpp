#pragma once

// Experiment runner: INI-style configuration, one run of the averaged
// iteration per config, trace CSV and summary artifacts, and UE/WE batch
// comparison tables.
//
// Config sections and keys (defaults in parentheses):
//
//   [experiment]  name (problem name), mode = ue | we (ue)
//   [problem]     kind = appendix | random-qc | tomography | linear
//                   appendix:    problem, n (family default), broyden_classical (false)
//                   random-qc:   seed (0), n (300), M (200), entry_min (-10), entry_max (10)
//                   tomography:  grid (63), views (16), rays (99)
//                   linear:      matrix, rhs, solution (none), x0 (zeros); paths relative to the config file
//   [plan]        strings: number of blocks E (4; linear 5; ignored for tomography, one block per view)
//                 layout = simultaneous | sequential (simultaneous; linear and tomography)
//                 block_lambda = fixed | spectral | residual (linear: fixed, tomography: residual)
//                 block_lambda_value (1), spectral_epsilon (0.01)
//   [solver]      lambda (1), max_iters (1000), tolerances (1e-1, 1e-4), guard (1e-10),
//                 assert_fejer (false), assert_error_bound (false)
//   [output]      trace, summary: file paths (none)
//
// The run stops at the smallest tolerance; the other levels are read off the
// trace afterwards. The stopping rule for level tol is met at the first row
// with violation <= tol or |T(x) - x|^2 <= guard.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "sqne/linear_block.hpp"
#include "sqne/phantom.hpp"
#include "sqne/problems.hpp"
#include "sqne/string_averaging.hpp"
#include "sqne/verify.hpp"

namespace sqne {

enum class Mode { UE, WE };

inline const char* to_string(Mode m) { return m == Mode::UE ? "ue" : "we"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "ue")
        return Mode::UE;
    if (s == "we")
        return Mode::WE;
    throw InvalidArgument("mode must be 'ue' or 'we', got '" + s + "'");
}

struct AppendixConfig {
    AppendixProblem problem = AppendixProblem::ExtendedPowell;
    std::optional<std::size_t> n;
    bool broyden_classical = false;
};

struct RandomQcConfig {
    RandomQcSpec spec;
};

struct TomographyConfig {
    PhantomSpec spec;
};

struct LinearFilesConfig {
    std::filesystem::path matrix;
    std::filesystem::path rhs;
    std::optional<std::filesystem::path> solution;
    std::optional<std::filesystem::path> x0;
};

using ProblemConfig = std::variant<AppendixConfig, RandomQcConfig, TomographyConfig, LinearFilesConfig>;

enum class BlockLayout { Simultaneous, Sequential };

struct PlanConfig {
    std::optional<std::size_t> strings;
    BlockLayout layout = BlockLayout::Simultaneous;
    std::optional<std::string> block_lambda;  // fixed | spectral | residual
    double block_lambda_value = 1.0;
    double spectral_epsilon = 0.01;
};

struct SolverSettings {
    double lambda = 1.0;
    std::size_t max_iters = 1000;
    std::vector<double> tolerances{1e-1, 1e-4};
    double guard = 1e-10;
    bool assert_fejer = false;
    bool assert_error_bound = false;
};

struct OutputConfig {
    std::optional<std::filesystem::path> trace;
    std::optional<std::filesystem::path> summary;
};

struct ExperimentConfig {
    std::string name;
    Mode mode = Mode::UE;
    ProblemConfig problem = AppendixConfig{};
    PlanConfig plan;
    SolverSettings solver;
    OutputConfig output;

    void validate() const {
        if (name.empty())
            throw InvalidArgument("[experiment] name: must not be empty");
        if (solver.tolerances.empty())
            throw InvalidArgument("[solver] tolerances: at least one level required");
        for (double t : solver.tolerances)
            if (!(t > 0.0))
                throw InvalidArgument("[solver] tolerances: levels must be positive");
        if (!(solver.lambda > 0.0 && solver.lambda < 2.0))
            throw InvalidArgument("[solver] lambda: must lie in (0,2)");
        if (!(solver.guard > 0.0))
            throw InvalidArgument("[solver] guard: must be positive");
        if (solver.max_iters < 1)
            throw InvalidArgument("[solver] max_iters: must be at least 1");
        if (plan.strings && *plan.strings == 0)
            throw InvalidArgument("[plan] strings: must be at least 1");
        if (plan.block_lambda && *plan.block_lambda != "fixed" && *plan.block_lambda != "spectral" &&
            *plan.block_lambda != "residual")
            throw InvalidArgument("[plan] block_lambda: expected fixed, spectral or residual");
    }
};

// ---------------------------------------------------------------------------
// parsing

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

class SectionReader {
public:
    SectionReader(const boost::property_tree::ptree& root, std::string section)
        : section_(std::move(section)) {
        if (auto child = root.get_child_optional(section_))
            node_ = &*child;
    }

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        if (!node_)
            return std::nullopt;
        auto v = node_->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
        if (!v)
            return std::nullopt;
        return trim(*v);
    }

    std::string required(const std::string& key) {
        auto v = raw(key);
        if (!v || v->empty())
            throw InvalidArgument(fmt::format("[{}] {}: required field missing", section_, key));
        return *v;
    }

    template <typename T>
    std::optional<T> get(const std::string& key) {
        auto v = raw(key);
        if (!v)
            return std::nullopt;
        return convert<T>(key, *v);
    }

    std::optional<std::vector<double>> list(const std::string& key) {
        auto v = raw(key);
        if (!v)
            return std::nullopt;
        std::vector<double> out;
        std::istringstream ss(*v);
        std::string tok;
        while (std::getline(ss, tok, ','))
            out.push_back(convert<double>(key, trim(tok)));
        return out;
    }

    /// Rejects keys that were never asked for.
    void finish() const {
        if (!node_)
            return;
        for (const auto& [k, _] : *node_)
            if (!used_.count(k))
                throw InvalidArgument(fmt::format("[{}] {}: unknown field", section_, k));
    }

private:
    template <typename T>
    T convert(const std::string& key, const std::string& text) const {
        auto fail = [&](const char* what) {
            return InvalidArgument(fmt::format("[{}] {}: expected {}, got '{}'", section_, key, what, text));
        };
        if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1" || text == "yes")
                return true;
            if (text == "false" || text == "0" || text == "no")
                return false;
            throw fail("true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            return text;
        } else {
            std::istringstream ss(text);
            T value{};
            if (!(ss >> value) || !(ss >> std::ws).eof())
                throw fail(std::is_integral_v<T> ? "an integer" : "a number");
            if constexpr (std::is_integral_v<T>)
                if (text.find('-') != std::string::npos)
                    throw fail("a non-negative integer");
            return value;
        }
    }

    std::string section_;
    const boost::property_tree::ptree* node_ = nullptr;
    std::set<std::string> used_;
};

}  // namespace detail

/// Parses a config. Relative file paths are resolved against `base_dir`.
inline ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    namespace pt = boost::property_tree;
    pt::ptree root;
    try {
        pt::ini_parser::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidArgument(fmt::format("config line {}: {}", e.line(), e.message()));
    }
    for (const auto& [section, child] : root) {
        static const std::set<std::string> known{"experiment", "problem", "plan", "solver", "output"};
        if (!known.count(section) || child.empty())
            throw InvalidArgument(fmt::format("config: unknown section or top-level key '{}'", section));
    }
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };

    ExperimentConfig cfg;
    detail::SectionReader problem(root, "problem");
    const std::string kind = problem.required("kind");
    if (kind == "appendix") {
        AppendixConfig a;
        const std::string name = problem.required("problem");
        try {
            a.problem = appendix_problem_from_string(name);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(std::string("[problem] problem: ") + e.what());
        }
        a.n = problem.get<std::size_t>("n");
        a.broyden_classical = problem.get<bool>("broyden_classical").value_or(false);
        cfg.problem = a;
        cfg.name = to_string(a.problem) + (a.broyden_classical ? "-classical" : "");
    } else if (kind == "random-qc") {
        RandomQcConfig r;
        r.spec.seed = problem.get<std::uint64_t>("seed").value_or(0);
        r.spec.n = problem.get<std::size_t>("n").value_or(r.spec.n);
        r.spec.M = problem.get<std::size_t>("M").value_or(r.spec.M);
        r.spec.entry_min = problem.get<double>("entry_min").value_or(r.spec.entry_min);
        r.spec.entry_max = problem.get<double>("entry_max").value_or(r.spec.entry_max);
        cfg.problem = r;
        cfg.name = fmt::format("random-qc-seed{}", r.spec.seed);
    } else if (kind == "tomography") {
        TomographyConfig t;
        t.spec.grid = problem.get<std::size_t>("grid").value_or(t.spec.grid);
        t.spec.views = problem.get<std::size_t>("views").value_or(t.spec.views);
        t.spec.rays_per_view = problem.get<std::size_t>("rays").value_or(t.spec.rays_per_view);
        cfg.problem = t;
        cfg.name = "tomography";
    } else if (kind == "linear") {
        LinearFilesConfig l;
        l.matrix = resolve(problem.required("matrix"));
        l.rhs = resolve(problem.required("rhs"));
        if (auto s = problem.raw("solution"); s && !s->empty())
            l.solution = resolve(*s);
        if (auto s = problem.raw("x0"); s && !s->empty())
            l.x0 = resolve(*s);
        cfg.problem = l;
        cfg.name = "linear";
    } else {
        throw InvalidArgument("[problem] kind: expected appendix, random-qc, tomography or linear, got '" + kind + "'");
    }
    problem.finish();

    detail::SectionReader exp(root, "experiment");
    if (auto n = exp.raw("name"); n && !n->empty())
        cfg.name = *n;
    if (auto m = exp.raw("mode")) {
        try {
            cfg.mode = mode_from_string(*m);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(std::string("[experiment] mode: ") + e.what());
        }
    }
    exp.finish();

    detail::SectionReader plan(root, "plan");
    cfg.plan.strings = plan.get<std::size_t>("strings");
    if (auto l = plan.raw("layout")) {
        if (*l == "simultaneous")
            cfg.plan.layout = BlockLayout::Simultaneous;
        else if (*l == "sequential")
            cfg.plan.layout = BlockLayout::Sequential;
        else
            throw InvalidArgument("[plan] layout: expected simultaneous or sequential, got '" + *l + "'");
    }
    cfg.plan.block_lambda = plan.raw("block_lambda");
    cfg.plan.block_lambda_value = plan.get<double>("block_lambda_value").value_or(1.0);
    cfg.plan.spectral_epsilon = plan.get<double>("spectral_epsilon").value_or(0.01);
    plan.finish();

    detail::SectionReader solver(root, "solver");
    cfg.solver.lambda = solver.get<double>("lambda").value_or(1.0);
    cfg.solver.max_iters = solver.get<std::size_t>("max_iters").value_or(1000);
    if (auto t = solver.list("tolerances"))
        cfg.solver.tolerances = *t;
    cfg.solver.guard = solver.get<double>("guard").value_or(1e-10);
    cfg.solver.assert_fejer = solver.get<bool>("assert_fejer").value_or(false);
    cfg.solver.assert_error_bound = solver.get<bool>("assert_error_bound").value_or(false);
    solver.finish();

    detail::SectionReader output(root, "output");
    if (auto p = output.raw("trace"); p && !p->empty())
        cfg.output.trace = resolve(*p);
    if (auto p = output.raw("summary"); p && !p->empty())
        cfg.output.summary = resolve(*p);
    output.finish();

    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open config " + path.string());
    try {
        return parse_experiment_config(in, path.parent_path());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

namespace detail {

inline std::string format_tolerances(const std::vector<double>& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i)
        s += fmt::format("{}{:g}", i ? ", " : "", t[i]);
    return s;
}

inline std::string format_problem_section(const ProblemConfig& p) {
    return std::visit(
        [](const auto& c) -> std::string {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, AppendixConfig>) {
                return fmt::format("kind = appendix\nproblem = {}\n{}broyden_classical = {}\n", to_string(c.problem),
                                   c.n ? fmt::format("n = {}\n", *c.n) : std::string{},
                                   c.broyden_classical ? "true" : "false");
            } else if constexpr (std::is_same_v<T, RandomQcConfig>) {
                return fmt::format("kind = random-qc\nseed = {}\nn = {}\nM = {}\nentry_min = {:.17g}\n"
                                   "entry_max = {:.17g}\n",
                                   c.spec.seed, c.spec.n, c.spec.M, c.spec.entry_min, c.spec.entry_max);
            } else if constexpr (std::is_same_v<T, TomographyConfig>) {
                return fmt::format("kind = tomography\ngrid = {}\nviews = {}\nrays = {}\n", c.spec.grid, c.spec.views,
                                   c.spec.rays_per_view);
            } else {
                std::string s = fmt::format("kind = linear\nmatrix = {}\nrhs = {}\n", c.matrix.string(),
                                            c.rhs.string());
                if (c.solution)
                    s += "solution = " + c.solution->string() + "\n";
                if (c.x0)
                    s += "x0 = " + c.x0->string() + "\n";
                return s;
            }
        },
        p);
}

}  // namespace detail

/// Resolved config as parseable text. With include_mode_and_output = false
/// the result identifies the experiment up to mode and artifact paths.
inline std::string format_experiment_config(const ExperimentConfig& cfg, bool include_mode_and_output = true) {
    std::string s = "[experiment]\n";
    s += "name = " + cfg.name + "\n";
    if (include_mode_and_output)
        s += fmt::format("mode = {}\n", to_string(cfg.mode));
    s += "\n[problem]\n" + detail::format_problem_section(cfg.problem);
    s += "\n[plan]\n";
    if (cfg.plan.strings)
        s += fmt::format("strings = {}\n", *cfg.plan.strings);
    s += fmt::format("layout = {}\n", cfg.plan.layout == BlockLayout::Simultaneous ? "simultaneous" : "sequential");
    if (cfg.plan.block_lambda)
        s += "block_lambda = " + *cfg.plan.block_lambda + "\n";
    s += fmt::format("block_lambda_value = {:.17g}\nspectral_epsilon = {:.17g}\n", cfg.plan.block_lambda_value,
                     cfg.plan.spectral_epsilon);
    s += fmt::format("\n[solver]\nlambda = {:.17g}\nmax_iters = {}\ntolerances = {}\nguard = {:g}\n"
                     "assert_fejer = {}\nassert_error_bound = {}\n",
                     cfg.solver.lambda, cfg.solver.max_iters, detail::format_tolerances(cfg.solver.tolerances),
                     cfg.solver.guard, cfg.solver.assert_fejer, cfg.solver.assert_error_bound);
    if (include_mode_and_output) {
        s += "\n[output]\n";
        if (cfg.output.trace)
            s += "trace = " + cfg.output.trace->string() + "\n";
        if (cfg.output.summary)
            s += "summary = " + cfg.output.summary->string() + "\n";
    }
    return s;
}

// ---------------------------------------------------------------------------
// problem assembly

struct PreparedProblem {
    AveragedOperator op;
    Vector x0;
    std::vector<std::string> warnings;
};

namespace detail {

template <RowMatrix Matrix>
AveragedOperator assemble_linear(std::shared_ptr<const LinearBlockProblem<Matrix>> P, BlockLayout layout) {
    return layout == BlockLayout::Sequential ? assemble_sequential(P) : assemble_simultaneous(P);
}

inline LambdaStrategy make_block_lambda(const PlanConfig& plan, std::size_t blocks, const char* fallback) {
    const std::string which = plan.block_lambda.value_or(fallback);
    if (which == "fixed")
        return FixedLambda{Vector(blocks, plan.block_lambda_value)};
    if (which == "spectral")
        return SpectralBand{plan.spectral_epsilon};
    return ResidualMinimizing{};
}

}  // namespace detail

inline PreparedProblem prepare_problem(const ExperimentConfig& cfg) {
    return std::visit(
        [&](const auto& c) -> PreparedProblem {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, AppendixConfig> || std::is_same_v<T, RandomQcConfig>) {
                TestProblemInstance inst;
                if constexpr (std::is_same_v<T, AppendixConfig>)
                    inst = build_appendix_problem(c.problem, c.n, c.broyden_classical);
                else
                    inst = generate_random_qc(c.spec);
                const std::size_t E = cfg.plan.strings.value_or(std::min<std::size_t>(4, inst.constraint_count()));
                return {default_string_plan(inst, E), inst.x0, inst.warnings};
            } else if constexpr (std::is_same_v<T, TomographyConfig>) {
                const auto tomo = build_projection_matrix(c.spec);
                auto base = block_by_view(tomo);
                auto P = std::make_shared<LinearBlockProblem<CsrMatrix>>(*base);
                P->strategy = detail::make_block_lambda(cfg.plan, P->blocks.size(), "residual");
                std::vector<std::string> warnings = tomo.warnings;
                warnings.push_back(fmt::format("tomography: {} rays retained of {}", tomo.A.rows(),
                                               c.spec.views * c.spec.rays_per_view));
                return {detail::assemble_linear<CsrMatrix>(P, cfg.plan.layout), Vector(tomo.A.cols(), 0.0),
                        warnings};
            } else {
                CsrMatrix A = read_coordinate_file(c.matrix.string());
                Vector b = read_vector_file(c.rhs.string());
                std::optional<Vector> sol;
                if (c.solution)
                    sol = read_vector_file(c.solution->string());
                Vector x0 = c.x0 ? read_vector_file(c.x0->string()) : Vector(A.cols(), 0.0);
                if (b.size() != A.rows())
                    throw InvalidArgument(fmt::format("[problem] rhs: {} values for {} rows", b.size(), A.rows()));
                if (x0.size() != A.cols())
                    throw InvalidArgument(fmt::format("[problem] x0: {} values for {} columns", x0.size(), A.cols()));
                const std::size_t p = cfg.plan.strings.value_or(5);
                auto blocks = contiguous_blocks(A.rows(), p);
                auto strategy = detail::make_block_lambda(cfg.plan, blocks.size(), "fixed");
                auto P = std::make_shared<const LinearBlockProblem<CsrMatrix>>(
                    make_cimmino_problem(std::move(A), std::move(b), std::move(blocks), strategy, std::move(sol)));
                return {detail::assemble_linear<CsrMatrix>(P, cfg.plan.layout), std::move(x0), {}};
            }
        },
        cfg.problem);
}

// ---------------------------------------------------------------------------
// running

enum class StopKind { Tolerance, Guard, NotReached };

inline const char* to_string(StopKind s) {
    switch (s) {
        case StopKind::Tolerance: return "tolerance";
        case StopKind::Guard: return "guard";
        case StopKind::NotReached: return "not-reached";
    }
    return "?";
}

struct ToleranceOutcome {
    double tolerance = 0.0;
    std::optional<std::size_t> iterations;  // first row meeting the stopping rule
    StopKind kind = StopKind::NotReached;
};

/// First row meeting violation <= tol, or else the guard.
inline ToleranceOutcome stopping_row(const IterationTrace& trace, double tol, double guard) {
    for (const auto& r : trace.rows) {
        if (r.violation <= tol)
            return {tol, r.k, StopKind::Tolerance};
        if (r.step_norm * r.step_norm <= guard)
            return {tol, r.k, StopKind::Guard};
    }
    return {tol, std::nullopt, StopKind::NotReached};
}

struct ExperimentResult {
    std::string name;
    Mode mode = Mode::UE;
    IterationTrace trace;
    std::vector<ToleranceOutcome> outcomes;  // in config order
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;

    TerminalStatus status() const { return trace.terminal_status; }

    int exit_code() const {
        switch (trace.terminal_status) {
            case TerminalStatus::FeasibilityReached: return 0;
            case TerminalStatus::MaxIters: return 2;
            case TerminalStatus::GuardTriggered: return 3;
        }
        return 1;
    }
};

inline SolverConfig make_solver_config(const ExperimentConfig& cfg) {
    SolverConfig s;
    s.lambda_schedule = SolverConfig::constant_lambda(cfg.solver.lambda);
    s.step_mode = cfg.mode == Mode::UE ? StepMode{SigmaMaxStep{}} : StepMode{ConstantStep{1.0}};
    s.max_iters = cfg.solver.max_iters;
    s.feasibility_tol = *std::min_element(cfg.solver.tolerances.begin(), cfg.solver.tolerances.end());
    s.fixed_point_guard = cfg.solver.guard;
    s.assert_fejer = cfg.solver.assert_fejer;
    s.assert_error_bound = cfg.solver.assert_error_bound;
    return s;
}

/// CSV with header k,sigma,lambda,step_norm,violation,distance. The
/// distance column is empty without a reference point.
inline void write_trace_csv(std::ostream& out, const IterationTrace& trace) {
    out << "k,sigma,lambda,step_norm,violation,distance\n";
    for (const auto& r : trace.rows) {
        out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},", r.k, r.sigma, r.lambda, r.step_norm, r.violation);
        if (!std::isnan(r.distance))
            out << fmt::format("{:.17g}", r.distance);
        out << '\n';
    }
}

inline void write_summary(std::ostream& out, const ExperimentConfig& cfg, const ExperimentResult& res) {
    out << "# resolved configuration\n" << format_experiment_config(cfg) << "\n[result]\n";
    out << "status = " << to_string(res.status()) << "\n";
    out << "exit_code = " << res.exit_code() << "\n";
    out << "iterations = " << res.trace.iterations() << "\n";
    if (!res.trace.rows.empty())
        out << fmt::format("final_violation = {:.17g}\n", res.trace.rows.back().violation);
    for (const auto& o : res.outcomes)
        out << fmt::format("iterations_to_{:g} = {}\nstop_{:g} = {}\n", o.tolerance,
                           o.iterations ? std::to_string(*o.iterations) : "none", o.tolerance, to_string(o.kind));
    out << fmt::format("wall_time_s = {:.6f}\n", res.wall_seconds);
    for (const auto& w : res.warnings)
        out << "warning = " << w << "\n";
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open " + path.string() + " for writing");
    out << text;
}

/// Runs one experiment and writes whichever artifacts the config names.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult res;
    res.name = cfg.name;
    res.mode = cfg.mode;
    const auto start = std::chrono::steady_clock::now();
    PreparedProblem prepared = prepare_problem(cfg);
    res.warnings = prepared.warnings;
    res.trace = iterate(prepared.op, prepared.x0, make_solver_config(cfg)).trace;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (double tol : cfg.solver.tolerances)
        res.outcomes.push_back(stopping_row(res.trace, tol, cfg.solver.guard));

    if (cfg.output.trace) {
        std::ostringstream s;
        write_trace_csv(s, res.trace);
        write_text_file(*cfg.output.trace, s.str());
    }
    if (cfg.output.summary) {
        std::ostringstream s;
        write_summary(s, cfg, res);
        write_text_file(*cfg.output.summary, s.str());
    }
    return res;
}

// ---------------------------------------------------------------------------
// UE / WE comparison

struct ComparisonRow {
    std::string name;
    double tolerance = 0.0;
    ToleranceOutcome ue;
    ToleranceOutcome we;
    std::optional<double> ratio;  // ue / we; 1 when both are 0
};

struct ComparisonMean {
    double tolerance = 0.0;
    std::size_t pairs = 0;  // rows where both sides stopped
    double mean_ue = 0.0;
    double mean_we = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;  // sorted by name, then config tolerance order
    std::vector<ComparisonMean> means;
};

inline std::optional<double> iteration_ratio(std::optional<std::size_t> ue, std::optional<std::size_t> we) {
    if (!ue || !we)
        return std::nullopt;
    if (*we == 0)
        return *ue == 0 ? std::optional<double>(1.0) : std::nullopt;
    return static_cast<double>(*ue) / static_cast<double>(*we);
}

/// Builds the table from finished UE and WE results (matched by name).
inline ComparisonTable compare_results(const std::vector<ExperimentResult>& ue, const std::vector<ExperimentResult>& we) {
    std::map<std::string, const ExperimentResult*> by_name;
    for (const auto& r : we)
        by_name[r.name] = &r;
    std::vector<const ExperimentResult*> order;
    for (const auto& r : ue)
        order.push_back(&r);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

    ComparisonTable table;
    std::map<double, ComparisonMean> acc;
    std::vector<double> tol_order;
    for (const auto* u : order) {
        auto it = by_name.find(u->name);
        if (it == by_name.end())
            throw InvalidArgument("compare_results: no WE result for '" + u->name + "'");
        const auto* w = it->second;
        if (u->outcomes.size() != w->outcomes.size())
            throw InvalidArgument("compare_results: tolerance lists differ for '" + u->name + "'");
        for (std::size_t i = 0; i < u->outcomes.size(); ++i) {
            ComparisonRow row{u->name, u->outcomes[i].tolerance, u->outcomes[i], w->outcomes[i],
                              iteration_ratio(u->outcomes[i].iterations, w->outcomes[i].iterations)};
            if (!acc.count(row.tolerance))
                tol_order.push_back(row.tolerance);
            auto& m = acc[row.tolerance];
            m.tolerance = row.tolerance;
            if (row.ue.iterations && row.we.iterations) {
                ++m.pairs;
                m.mean_ue += static_cast<double>(*row.ue.iterations);
                m.mean_we += static_cast<double>(*row.we.iterations);
            }
            table.rows.push_back(std::move(row));
        }
    }
    for (double t : tol_order) {
        auto m = acc[t];
        if (m.pairs) {
            m.mean_ue /= static_cast<double>(m.pairs);
            m.mean_we /= static_cast<double>(m.pairs);
        }
        table.means.push_back(m);
    }
    return table;
}

/// Pairs configs by name (one UE and one WE each, otherwise identical),
/// runs them and tabulates iterations to each tolerance.
inline ComparisonTable batch_compare(const std::vector<ExperimentConfig>& cfgs,
                                     std::vector<ExperimentResult>* results_out = nullptr) {
    std::map<std::string, std::pair<const ExperimentConfig*, const ExperimentConfig*>> pairs;
    for (const auto& c : cfgs) {
        auto& slot = pairs[c.name];
        auto& side = c.mode == Mode::UE ? slot.first : slot.second;
        if (side)
            throw InvalidArgument(fmt::format("batch_compare: two {} configs named '{}'", to_string(c.mode), c.name));
        side = &c;
    }
    for (const auto& [name, p] : pairs) {
        if (!p.first || !p.second)
            throw InvalidArgument(fmt::format("batch_compare: '{}' has no {} counterpart", name,
                                              p.first ? "we" : "ue"));
        if (format_experiment_config(*p.first, false) != format_experiment_config(*p.second, false))
            throw InvalidArgument(fmt::format("batch_compare: '{}' configs differ in more than the mode", name));
    }
    std::vector<ExperimentResult> ue, we;
    for (const auto& [name, p] : pairs) {
        ue.push_back(run_experiment(*p.first));
        we.push_back(run_experiment(*p.second));
    }
    auto table = compare_results(ue, we);
    if (results_out) {
        results_out->clear();
        for (std::size_t i = 0; i < ue.size(); ++i) {
            results_out->push_back(std::move(ue[i]));
            results_out->push_back(std::move(we[i]));
        }
    }
    return table;
}

inline void write_comparison_csv(std::ostream& out, const ComparisonTable& t) {
    auto count = [](const ToleranceOutcome& o) { return o.iterations ? std::to_string(*o.iterations) : std::string{}; };
    out << "name,tolerance,ue_iters,we_iters,ratio,ue_stop,we_stop\n";
    for (const auto& r : t.rows)
        out << fmt::format("{},{:g},{},{},{},{},{}\n", r.name, r.tolerance, count(r.ue), count(r.we),
                           r.ratio ? fmt::format("{:.6g}", *r.ratio) : std::string{}, to_string(r.ue.kind),
                           to_string(r.we.kind));
    for (const auto& m : t.means)
        out << fmt::format("mean,{:g},{:.17g},{:.17g},{},{},{}\n", m.tolerance, m.mean_ue, m.mean_we,
                           m.mean_we > 0.0 ? fmt::format("{:.6g}", m.mean_ue / m.mean_we) : std::string{},
                           m.pairs, m.pairs);
}

/// Fixed-width table for terminals.
inline std::string format_comparison(const ComparisonTable& t) {
    auto cell = [](const ToleranceOutcome& o) {
        if (!o.iterations)
            return std::string("-");
        return std::to_string(*o.iterations) + (o.kind == StopKind::Guard ? "g" : "");
    };
    std::string s = fmt::format("{:<28} {:>8} {:>8} {:>8} {:>7}\n", "problem", "tol", "ue", "we", "ratio");
    for (const auto& r : t.rows)
        s += fmt::format("{:<28} {:>8g} {:>8} {:>8} {:>7}\n", r.name, r.tolerance, cell(r.ue), cell(r.we),
                         r.ratio ? fmt::format("{:.3f}", *r.ratio) : "-");
    for (const auto& m : t.means)
        s += fmt::format("{:<28} {:>8g} {:>8.2f} {:>8.2f} {:>7}\n", fmt::format("mean ({} pairs)", m.pairs),
                         m.tolerance, m.mean_ue, m.mean_we,
                         m.mean_we > 0.0 ? fmt::format("{:.3f}", m.mean_ue / m.mean_we) : "-");
    s += "(g: stopped by the fixed-point guard before reaching the tolerance)\n";
    return s;
}

// ---------------------------------------------------------------------------
// property suite

/// QNE of every pool operator on `samples` points around the reference,
/// gradient and convexity checks for inequality problems, and a UE run with
/// the Fejer assertion that also reports min sigma_max.
inline VerifyReport verify_experiment(const ExperimentConfig& cfg, std::size_t samples = 200,
                                      std::uint64_t seed = 1) {
    VerifyReport report;
    PreparedProblem prepared = prepare_problem(cfg);
    const auto& ref = prepared.op.reference();
    if (ref) {
        const double radius = std::max(1.0, distance(prepared.x0, *ref));
        verify_pool_qne(prepared.op, *ref, sample_around(*ref, radius, samples, seed), report);
    } else {
        report.lines.push_back({"QNE", true, "skipped: no known solution point"});
    }

    std::optional<TestProblemInstance> inst;
    if (auto a = std::get_if<AppendixConfig>(&cfg.problem))
        inst = build_appendix_problem(a->problem, a->n, a->broyden_classical);
    else if (auto r = std::get_if<RandomQcConfig>(&cfg.problem))
        inst = generate_random_qc(r->spec);
    if (inst) {
        const Vector centre = inst->known_feasible_point.value_or(inst->x0);
        const double radius = std::max(1.0, distance(inst->x0, centre));
        auto points = sample_around(centre, radius, 10, seed + 1);
        points.push_back(inst->x0);
        std::size_t bad_grad = 0, bad_convex = 0;
        double worst = 0.0;
        for (const auto& o : inst->oracles) {
            for (std::size_t s = 0; s < points.size(); ++s) {
                double err = 0.0;
                if (!gradient_matches_fd(o, points[s], 1e-5, &err))
                    ++bad_grad;
                worst = std::max(worst, err);
                if (inst->convex && !subgradient_inequality_holds(o, points[s], points[(s + 1) % points.size()]))
                    ++bad_convex;
            }
        }
        const std::size_t checks = inst->oracles.size() * points.size();
        report.lines.push_back({"gradient vs finite differences", bad_grad == 0,
                                fmt::format("{} checks, {} failures, worst relative error {:.2e}", checks, bad_grad,
                                            worst)});
        if (inst->convex)
            report.lines.push_back({"subgradient inequality", bad_convex == 0,
                                    fmt::format("{} pairs, {} failures", checks, bad_convex)});
        else
            report.lines.push_back({"subgradient inequality", true, "skipped: nonconvex variant"});
    }

    SolverConfig sc = make_solver_config(cfg);
    sc.step_mode = SigmaMaxStep{};
    sc.assert_fejer = ref.has_value();
    try {
        const auto run = iterate(prepared.op, prepared.x0, sc);
        double min_sigma = std::numeric_limits<double>::infinity();
        for (const auto& r : run.trace.rows)
            min_sigma = std::min(min_sigma, r.sigma);
        report.lines.push_back({"sigma_max >= 1 along a UE run", min_sigma >= 1.0 - 1e-10,
                                fmt::format("{} rows, min sigma {:.17g}", run.trace.rows.size(), min_sigma)});
        if (ref)
            report.lines.push_back({"Fejer monotone UE run", true, fmt::format("{} steps", run.trace.iterations())});
    } catch (const InvariantViolation& e) {
        report.lines.push_back({"UE run invariants", false, e.what()});
    }
    return report;
}

}  // namespace sqne
