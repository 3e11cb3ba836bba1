#pragma once

// CART classification trees and the train/test protocol used to compare
// datasets.

#include "dsagen/dataset.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dsagen::mlbench {

/// 1 - sum p_i^2. Throws on an all-zero count vector.
double gini(const std::vector<double>& counts);

struct TreeParams {
    int max_depth = 5;
    double ccp_alpha = 0.01;
    int min_samples_split = 2;

    void validate() const;
};

/// A split sends x[feature] <= threshold to the left child.
struct Node {
    int feature = -1;  ///< -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<int, 2> counts{};
    int depth = 0;

    bool leaf() const { return feature < 0; }
    int n() const { return counts[0] + counts[1]; }
    int label() const { return counts[1] > counts[0] ? 1 : 0; }
};

struct Tree {
    std::vector<Node> nodes;  ///< preorder, root first
    std::vector<std::string> feature_names;

    int predict(const Eigen::VectorXd& x) const;
    std::vector<int> predict(const Eigen::MatrixXd& X) const;
    int depth() const;
    int n_leaves() const;

    nlohmann::ordered_json to_json() const;
    static Tree from_json(const nlohmann::json& j);
};

/// Best split of one node, or feature -1 when none exists.
struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  ///< sample-weighted child Gini
};

/// Exhaustive search over midpoints of sorted distinct values. Ties within
/// 1e-12 go to the lowest feature, then the lowest threshold.
Split best_split(const Eigen::MatrixXd& X, const std::vector<int>& y, const std::vector<int>& rows);

/// Greedy CART followed by minimal cost-complexity pruning at ccp_alpha.
/// Labels are 0 or 1.
Tree train(const Eigen::MatrixXd& X, const std::vector<int>& y, const TreeParams& params = {},
           std::vector<std::string> feature_names = {});

/// Weakest-link pruning of a grown tree; alpha 0 leaves it unchanged.
Tree prune(const Tree& grown, double ccp_alpha);

/// 2 Tp / (2 Tp + Fp + Fn), 0 when the denominator is 0.
double f1(const std::vector<int>& predicted, const std::vector<int>& truth);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Feature matrix and secure labels of a dataset.
Eigen::MatrixXd features(const dataset::Dataset& d);
std::vector<int> secure_labels(const dataset::Dataset& d);

struct TrainTestSplit {
    dataset::Dataset train;
    dataset::Dataset test;
};

/// Seeded shuffle; the first round(fraction n) rows train. Row order is kept.
TrainTestSplit split(const dataset::Dataset& d, double train_fraction, std::uint64_t seed);

struct FoldScore {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

std::vector<FoldScore> cross_validate(const Eigen::MatrixXd& X, const std::vector<int>& y, int folds,
                                      const TreeParams& params, std::uint64_t seed);

enum class Cause { Feasibility, Stability, Both };
std::string to_string(Cause c);

/// Misclassified counts per damping bin and cause. Bin k covers
/// [k w, (k + 1) w); every bin holding a pooled test point is present, and
/// points without a damping ratio are counted apart.
struct Histogram {
    double bin_width = 0.0025;
    std::map<long, std::array<int, 3>> bins;
    std::array<int, 3> undefined{};

    int total() const;
};

struct NamedDataset {
    std::string name;
    dataset::Dataset data;
};

struct EvalConfig {
    TreeParams tree;
    double train_fraction = 0.75;
    int folds = 10;
    std::uint64_t seed = 1;
    std::size_t boundary_source = 0;  ///< dataset whose test rows form the boundary set
    double boundary_lo = 0.029;
    double boundary_hi = 0.031;
    double bin_width = 0.0025;
};

struct EvalReport {
    std::vector<std::string> train_names;
    std::vector<std::string> test_names;      ///< train names plus "boundary"
    std::vector<std::vector<double>> f1;      ///< [train][test]
    std::vector<std::vector<FoldScore>> cv;   ///< per train set
    std::vector<Histogram> misclassified;     ///< per train set, on the pooled test rows
    std::vector<Tree> trees;
    int boundary_size = 0;
    int pooled_size = 0;

    nlohmann::ordered_json to_json() const;
    void write_histogram_csv(std::ostream& out) const;
};

/// Trains one tree per dataset and scores it on every test partition and the
/// boundary set. Misclassifications on the pooled test partitions are binned
/// by damping ratio; the cause is read from two auxiliary trees trained on
/// the feasibility and damping labels alone.
EvalReport cross_evaluate(const std::vector<NamedDataset>& sets, const dataset::SecuritySpec& spec,
                          const EvalConfig& cfg);

}  // namespace dsagen::mlbench
