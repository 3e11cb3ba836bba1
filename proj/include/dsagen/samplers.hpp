#pragma once

// Benchmark generators: Latin-hypercube sampling of the whole input box and
// importance sampling from a normal fitted to HIC-region points.

#include "dsagen/dataset.hpp"
#include "dsagen/netmodel.hpp"
#include "dsagen/walker.hpp"

#include <cstdint>
#include <vector>

namespace dsagen::samplers {

/// n points; in every coordinate each of the n equal strata holds exactly one.
std::vector<Eigen::VectorXd> lhc_sample(const netmodel::Box& box, int n, std::uint64_t seed);

struct BenchmarkResult {
    dataset::Dataset data;
    int drawn = 0;
    int infeasible = 0;  ///< drawn points that needed a counterpart
    int dropped = 0;     ///< projection failures; neither row is kept
};

/// LHC over the context box. Infeasible samples are kept and paired with
/// their projection.
BenchmarkResult lhc_benchmark(const walker::Context& ctx, const dataset::SecuritySpec& spec, int n,
                              std::uint64_t seed, int workers = 1);

struct MvnSpec {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    double s = 0.25;

    void validate() const;
    Eigen::MatrixXd reduced() const { return s * sigma; }
};

/// Sample mean and unbiased covariance plus 1e-8 I. Needs at least dim + 1 points.
MvnSpec fit_mvn(const std::vector<Eigen::VectorXd>& points, double s = 0.25);

struct MvnDraws {
    std::vector<Eigen::VectorXd> points;
    int rejected = 0;  ///< out-of-box draws
    int clamped = 0;   ///< samples that used up their tries and were clamped
};

/// Draws from N(mu, s Sigma) restricted to the box by rejection, at most
/// max_tries per sample. Zero-width box coordinates are pinned.
MvnDraws mvn_sample(const MvnSpec& mvn, const netmodel::Box& box, int n, std::uint64_t seed, int max_tries = 100);

struct ImportanceConfig {
    int n_init = 4000;
    int n = 10000;
    double s = 0.25;
};

struct ImportanceResult {
    BenchmarkResult initial;  ///< the LHC pass used for the fit
    MvnSpec fit;
    int seeds = 0;            ///< feasible HIC points behind the fit
    MvnDraws draws;
    BenchmarkResult result;
};

ImportanceResult importance_benchmark(const walker::Context& ctx, const dataset::SecuritySpec& spec,
                                      const ImportanceConfig& cfg, std::uint64_t seed, int workers = 1);

}  // namespace dsagen::samplers
