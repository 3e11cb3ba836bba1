#pragma once

#include "dsagen/dataset.hpp"
#include "dsagen/mlbench.hpp"
#include "dsagen/relaxation.hpp"
#include "dsagen/samplers.hpp"
#include "dsagen/walker.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dsagen::config {

/// Every tunable of a run. Paths are stored as given; relative paths resolve
/// against base_dir.
struct RunConfig {
    std::string case_file;
    std::string dynamics_file;  ///< defaults to <case stem>.dyn.json
    double load_scale = 0.80;
    double load_range = 0.10;

    int N1 = 100;
    double tau = 0.05;
    int eta = 30;
    int obbt_iters = 3;
    double conic_tol = 1e-6;
    int hr_burn_in = 100;
    int hr_thinning = 10;
    int volume_samples = 500;

    double gamma = 0.03;
    double beta = 0.0025;
    std::array<double, 4> epsilons{0.04, 0.03, 0.02, 0.01};
    std::array<double, 3> distances{0.010, 0.005, 0.0025};
    int kappa_max = 30;
    int kappa_hic = 15;
    int N2 = 200;
    std::uint64_t seed = 1;
    double discretization_mw = 1.0;

    std::string bench = "lhc";
    int n_init = 4000;
    int n = 10000;
    double s_scale = 0.25;

    int max_depth = 5;
    double ccp_alpha = 0.01;
    double train_fraction = 0.75;
    int folds = 10;

    std::string out_dir = "out";
    int workers = 1;

    std::string base_dir = ".";

    void validate() const;
    std::string resolve(const std::string& path) const;
    std::string case_path() const { return resolve(case_file); }
    std::string dynamics_path() const;
    std::string out_path(const std::string& name) const;

    dataset::SecuritySpec security() const;
    walker::DWConfig walk() const;
    relaxation::HyperplaneConfig hyperplanes() const;
    relaxation::SolveOptions solve() const;
    samplers::ImportanceConfig importance() const;
    mlbench::EvalConfig evaluation() const;

    /// Canonical form; key order is fixed.
    nlohmann::ordered_json to_json() const;
};

/// Parses TOML text. Unknown keys and wrongly typed values are config errors.
RunConfig parse_toml(const std::string& text, const std::string& base_dir = ".");
RunConfig load_toml(const std::string& path);

/// Applies "key=value" overrides; the value is read as a TOML value, and as a
/// plain string when that fails.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// DSAGEN_SEED, when set, replaces the seed.
void apply_environment(RunConfig& cfg);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex(std::uint64_t h);

}  // namespace dsagen::config
