// Command-line front end: solve, batch, gen, verify.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "sqne/experiment.hpp"

namespace fs = std::filesystem;
using namespace sqne;

namespace {

struct Overrides {
    std::string mode;
    std::vector<double> tolerances;
    std::optional<std::size_t> max_iters;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool small = false;
    bool broyden_classical = false;
};

void add_override_flags(CLI::App* cmd, Overrides& o, bool with_mode) {
    if (with_mode)
        cmd->add_option("--mode", o.mode, "ue (extrapolated) or we (sigma = 1)")->check(CLI::IsMember({"ue", "we"}));
    cmd->add_option("--tol", o.tolerances, "stopping tolerance level (repeatable)")->take_all();
    cmd->add_option("--max-iters", o.max_iters, "iteration cap");
    cmd->add_option("--seed", o.seed, "random-qc seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_flag("--small", o.small, "random-qc small preset (n = 50, M = 40)");
    cmd->add_flag("--broyden-classical", o.broyden_classical, "classical (nonconvex) Broyden terms");
}

void apply(const Overrides& o, ExperimentConfig& cfg) {
    if (!o.mode.empty())
        cfg.mode = mode_from_string(o.mode);
    if (!o.tolerances.empty())
        cfg.solver.tolerances = o.tolerances;
    if (o.max_iters)
        cfg.solver.max_iters = *o.max_iters;
    if (auto r = std::get_if<RandomQcConfig>(&cfg.problem)) {
        if (o.seed)
            r->spec.seed = *o.seed;
        if (o.small) {
            const auto s = RandomQcSpec::small(r->spec.seed);
            r->spec.n = s.n;
            r->spec.M = s.M;
        }
    }
    if (auto a = std::get_if<AppendixConfig>(&cfg.problem); a && o.broyden_classical)
        a->broyden_classical = true;
    if (!o.out.empty()) {
        const fs::path dir(o.out);
        const std::string stem = fmt::format("{}.{}", cfg.name, to_string(cfg.mode));
        cfg.output.trace = dir / (stem + ".trace.csv");
        cfg.output.summary = dir / (stem + ".summary.txt");
    }
    cfg.validate();
}

std::vector<fs::path> config_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ini")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

void write_config(const fs::path& dir, const ExperimentConfig& cfg) {
    write_text_file(dir / fmt::format("{}.{}.ini", cfg.name, to_string(cfg.mode)), format_experiment_config(cfg));
}

void write_pair(const fs::path& dir, ExperimentConfig cfg) {
    cfg.mode = Mode::UE;
    write_config(dir, cfg);
    cfg.mode = Mode::WE;
    write_config(dir, cfg);
}

int cmd_solve(const std::string& path, const Overrides& o) {
    ExperimentConfig cfg = load_experiment_config(path);
    apply(o, cfg);
    const ExperimentResult res = run_experiment(cfg);
    std::ostringstream s;
    write_summary(s, cfg, res);
    std::cout << s.str();
    return res.exit_code();
}

int cmd_batch(const std::string& dir, const Overrides& o) {
    std::vector<ExperimentConfig> cfgs;
    for (const auto& f : config_files(dir)) {
        cfgs.push_back(load_experiment_config(f));
        apply(o, cfgs.back());
    }
    if (cfgs.empty())
        throw InvalidArgument("batch: no .ini configs in " + dir);
    const ComparisonTable table = batch_compare(cfgs);
    std::cout << format_comparison(table);
    if (!o.out.empty()) {
        std::ostringstream s;
        write_comparison_csv(s, table);
        write_text_file(fs::path(o.out) / "comparison.csv", s.str());
    }
    return 0;
}

int cmd_gen(const std::string& what, const std::string& arg, const Overrides& o) {
    const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
    fs::create_directories(dir);
    const std::uint64_t seed = o.seed.value_or(1);

    auto appendix_cfg = [&](AppendixProblem p) {
        ExperimentConfig cfg;
        cfg.problem = AppendixConfig{p, std::nullopt, o.broyden_classical && p == AppendixProblem::BroydenTridiagonal};
        cfg.name = to_string(p) + (std::get<AppendixConfig>(cfg.problem).broyden_classical ? "-classical" : "");
        return cfg;
    };
    auto random_cfg = [&](std::uint64_t s) {
        ExperimentConfig cfg;
        RandomQcConfig r;
        r.spec = o.small ? RandomQcSpec::small(s) : RandomQcSpec{};
        r.spec.seed = s;
        cfg.problem = r;
        cfg.name = fmt::format("random-qc-seed{}", s);
        cfg.solver.tolerances = {1e-4};
        return cfg;
    };

    if (what == "appendix") {
        const auto p = appendix_problem_from_string(arg);
        const auto cfg = appendix_cfg(p);
        const auto inst = build_appendix_problem(p, std::nullopt, o.broyden_classical);
        std::ostringstream m;
        write_manifest(m, inst);
        write_text_file(dir / (cfg.name + ".manifest"), m.str());
        write_pair(dir, cfg);
        for (const auto& w : inst.warnings)
            std::cerr << "warning: " << w << "\n";
    } else if (what == "random") {
        const auto cfg = random_cfg(seed);
        const auto inst = generate_random_qc(std::get<RandomQcConfig>(cfg.problem).spec);
        std::ostringstream m;
        write_manifest(m, inst);
        write_text_file(dir / (cfg.name + ".manifest"), m.str());
        write_pair(dir, cfg);
    } else if (what == "tomography") {
        const auto tomo = build_projection_matrix(PhantomSpec{});
        write_tomography(dir, tomo);
        ExperimentConfig cfg;
        cfg.name = "tomography";
        // Blocks follow views; a linear-files config would split rows
        // contiguously, which misaligns once missed rays are dropped.
        cfg.problem = TomographyConfig{tomo.spec};
        cfg.plan.block_lambda = "residual";
        cfg.solver.max_iters = 50;
        cfg.solver.tolerances = {1e-12};
        write_pair(dir, cfg);
        std::cerr << fmt::format("{} rows, {} columns, {} nonzeros\n", tomo.A.rows(), tomo.A.cols(), tomo.A.nnz());
    } else if (what == "table1") {
        for (auto p : kAppendixProblems)
            write_pair(dir, appendix_cfg(p));
    } else if (what == "table2") {
        const std::size_t count = o.small ? 20 : 100;
        for (std::size_t i = 0; i < count; ++i)
            write_pair(dir, random_cfg(seed + i));
    } else {
        throw InvalidArgument("gen: expected appendix, random, tomography, table1 or table2");
    }
    return 0;
}

int cmd_verify(const std::string& path, const Overrides& o) {
    ExperimentConfig cfg = load_experiment_config(path);
    apply(o, cfg);
    const VerifyReport report = verify_experiment(cfg, 200, o.seed.value_or(1));
    for (const auto& l : report.lines)
        std::cout << fmt::format("{} {}: {}\n", l.passed ? "PASS" : "FAIL", l.name, l.detail);
    return report.passed() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Averaged string iterations with extrapolation for convex feasibility problems"};
    app.require_subcommand(1);

    Overrides solve_o, batch_o, gen_o, verify_o;
    std::string solve_cfg, batch_dir, gen_what, gen_arg, verify_cfg;

    auto* solve = app.add_subcommand("solve", "run one config; exit 0 feasible, 2 max iterations, 3 guard");
    solve->add_option("config", solve_cfg, "config file")->required();
    add_override_flags(solve, solve_o, true);

    auto* batch = app.add_subcommand("batch", "run paired ue/we configs in a directory and compare");
    batch->add_option("dir", batch_dir, "directory of .ini configs")->required();
    add_override_flags(batch, batch_o, false);

    auto* gen = app.add_subcommand("gen", "write problem files and configs");
    gen->add_option("what", gen_what, "appendix | random | tomography | table1 | table2")->required();
    gen->add_option("problem", gen_arg, "appendix problem name");
    add_override_flags(gen, gen_o, false);

    auto* verify = app.add_subcommand("verify", "run the property suite on a config's problem");
    verify->add_option("config", verify_cfg, "config file")->required();
    add_override_flags(verify, verify_o, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*solve)
            return cmd_solve(solve_cfg, solve_o);
        if (*batch)
            return cmd_batch(batch_dir, batch_o);
        if (*gen)
            return cmd_gen(gen_what, gen_arg, gen_o);
        return cmd_verify(verify_cfg, verify_o);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
}
