#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dsagen::dataset {

/// Security boundary gamma and HIC half-width beta, as damping ratios.
struct SecuritySpec {
    double gamma = 0.03;
    double beta = 0.0025;

    void validate() const;
    /// Strict band gamma - beta < zeta < gamma + beta.
    bool in_hic(double zeta) const { return gamma - beta < zeta && zeta < gamma + beta; }
    bool secure_damping(double zeta) const { return zeta >= gamma; }
};

enum class Source { DW, LHC, Importance, Projection };
std::string to_string(Source s);
Source parse_source(const std::string& s);

/// Evaluation of one operating point before labeling.
struct RawResult {
    Eigen::VectorXd x;
    bool converged = false;
    bool feasible = false;
    std::optional<double> zeta;
    Source source = Source::DW;
    std::uint64_t seed = 0;
};

struct LabeledSample {
    std::int64_t id = 0;
    Eigen::VectorXd x;
    bool converged = false;
    bool feasible = false;
    std::optional<double> zeta;
    bool stable = false;
    bool secure = false;
    bool in_hic = false;
    Source source = Source::DW;
    std::uint64_t seed = 0;
};

LabeledSample label(const RawResult& r, const SecuritySpec& spec, std::int64_t id = 0);

struct Dataset {
    std::vector<std::string> names;  ///< input coordinate names, layout order
    std::vector<LabeledSample> rows;

    /// Renumbers ids 0..n-1 in row order.
    void renumber();
};

Dataset make_dataset(std::vector<std::string> names, const std::vector<RawResult>& raw, const SecuritySpec& spec);

enum class RebalanceMode { Random, BalancedSecure };

/// Random: uniform subsample of size n. BalancedSecure: n/2 secure and n/2
/// insecure rows, each drawn uniformly within its class. Row order is kept.
Dataset rebalance(const Dataset& d, int n, RebalanceMode mode, std::uint64_t seed);

/// n rows of which floor(secure_share n) are secure. BalancedSecure is share 0.5.
Dataset resample_with_share(const Dataset& d, int n, double secure_share, std::uint64_t seed);

struct DatasetStats {
    std::int64_t n = 0;
    double feasible = 0.0;
    double stable = 0.0;
    double secure = 0.0;
    double hic = 0.0;
};

DatasetStats stats(const Dataset& d);
std::string stats_json(const DatasetStats& s);

/// CSV: id, <names>..., converged, feasible, zeta, stable, secure, in_hic,
/// source, seed. Floats use 9 significant digits; zeta is blank when undefined.
void write_csv(const Dataset& d, std::ostream& out);
void write_csv(const Dataset& d, const std::string& path);
Dataset read_csv(std::istream& in);
Dataset read_csv(const std::string& path);

}  // namespace dsagen::dataset
