// dsagen: boundary-dense dataset generation for small-signal security
// assessment.

#include "dsagen/config.hpp"
#include "dsagen/dataset.hpp"
#include "dsagen/error.hpp"
#include "dsagen/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

using namespace dsagen;

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int workers = 0;
    std::int64_t seed = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "TOML run configuration")->required()->check(CLI::ExistingFile);
        cmd->add_option("-s,--set", overrides, "override a config key (key=value)");
        cmd->add_option("-o,--out", out_dir, "output directory");
        cmd->add_option("-j,--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", seed, "base seed")->check(CLI::NonNegativeNumber);
    }

    config::RunConfig load() const {
        config::RunConfig cfg = config::load_toml(config_path);
        for (const auto& o : overrides) config::apply_override(cfg, o);
        if (!out_dir.empty()) {
            cfg.out_dir = std::filesystem::absolute(out_dir).string();
        }
        if (workers > 0) cfg.workers = workers;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        config::apply_environment(cfg);
        cfg.validate();
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-dense dataset generation for small-signal security assessment"};
    app.require_subcommand(1);
    app.set_version_flag("--version", DSAGEN_VERSION_STRING);

    Common poly_opts, gen_opts, bench_opts, eval_opts;
    auto* poly = app.add_subcommand("polytope", "bound tightening and separating hyperplanes");
    poly_opts.attach(poly);

    auto* gen = app.add_subcommand("generate", "initialization points, directed walks, final check");
    gen_opts.attach(gen);
    bool resume = false;
    gen->add_flag("--resume", resume, "reuse completed walks from a previous run");

    auto* bench = app.add_subcommand("benchmark", "LHC or importance-sampling dataset");
    bench_opts.attach(bench);
    std::string which;
    bench->add_option("which", which, "lhc or importance (default: the 'bench' key)")
        ->check(CLI::IsMember({"lhc", "importance"}));

    auto* eval = app.add_subcommand("train-eval", "train decision trees and cross-evaluate datasets");
    eval_opts.attach(eval);
    std::vector<std::string> data_args;
    eval->add_option("-d,--data", data_args, "dataset as name=path (default: proposed, lhc, importance in the output directory)");

    auto* st = app.add_subcommand("stats", "class shares of a dataset CSV");
    std::string stats_path;
    st->add_option("csv", stats_path, "dataset CSV")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (poly->parsed()) {
            pipeline::cmd_polytope(poly_opts.load(), std::cerr);
        } else if (gen->parsed()) {
            pipeline::cmd_generate(gen_opts.load(), resume, std::cerr);
        } else if (bench->parsed()) {
            const auto cfg = bench_opts.load();
            pipeline::cmd_benchmark(cfg, which.empty() ? cfg.bench : which, std::cerr);
        } else if (eval->parsed()) {
            const auto cfg = eval_opts.load();
            std::vector<std::pair<std::string, std::string>> sets;
            for (const auto& d : data_args) {
                const auto eq = d.find('=');
                if (eq == std::string::npos || eq == 0) throw config_error("--data expects name=path, got " + d);
                sets.emplace_back(d.substr(0, eq), std::filesystem::absolute(d.substr(eq + 1)).string());
            }
            if (sets.empty()) {
                for (const char* name : {"proposed", "lhc", "importance"}) {
                    const std::string p = cfg.out_path(std::string(name) + ".csv");
                    if (std::filesystem::exists(p)) sets.emplace_back(name, p);
                }
            }
            pipeline::cmd_train_eval(cfg, sets, std::cerr);
        } else if (st->parsed()) {
            std::cout << dataset::stats_json(dataset::stats(dataset::read_csv(stats_path))) << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "dsagen: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "dsagen: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
