#include "dsagen/mlbench.hpp"

#include "dsagen/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>

namespace dsagen::mlbench {

namespace {

constexpr double kTieTol = 1e-12;

double gini2(int a, int b) {
    const double n = a + b;
    const double p = a / n, q = b / n;
    return 1.0 - p * p - q * q;
}

int grow(Tree& t, const Eigen::MatrixXd& X, const std::vector<int>& y, std::vector<int> rows, int depth,
         const TreeParams& params) {
    Node node;
    node.depth = depth;
    for (int r : rows) ++node.counts[y[r]];
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.push_back(node);
    const bool pure = node.counts[0] == 0 || node.counts[1] == 0;
    if (pure || depth >= params.max_depth || node.n() < params.min_samples_split) return id;
    const Split s = best_split(X, y, rows);
    if (s.feature < 0) return id;
    std::vector<int> left, right;
    for (int r : rows) (X(r, s.feature) <= s.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    t.nodes[id].feature = s.feature;
    t.nodes[id].threshold = s.threshold;
    const int l = grow(t, X, y, std::move(left), depth + 1, params);
    t.nodes[id].left = l;
    const int r = grow(t, X, y, std::move(right), depth + 1, params);
    t.nodes[id].right = r;
    return id;
}

/// Copies the subtree at `at` in preorder, dropping pruned descendants.
int compact(const Tree& src, int at, Tree& dst) {
    const int id = static_cast<int>(dst.nodes.size());
    dst.nodes.push_back(src.nodes[at]);
    if (!src.nodes[at].leaf()) {
        const int l = compact(src, src.nodes[at].left, dst);
        dst.nodes[id].left = l;
        const int r = compact(src, src.nodes[at].right, dst);
        dst.nodes[id].right = r;
    }
    return id;
}

nlohmann::ordered_json node_json(const Tree& t, int i) {
    const Node& n = t.nodes[i];
    nlohmann::ordered_json j;
    j["counts"] = {n.counts[0], n.counts[1]};
    if (n.leaf()) {
        j["class"] = n.label();
        return j;
    }
    j["feature"] = n.feature;
    if (static_cast<std::size_t>(n.feature) < t.feature_names.size()) j["name"] = t.feature_names[n.feature];
    j["threshold"] = n.threshold;
    j["left"] = node_json(t, n.left);
    j["right"] = node_json(t, n.right);
    return j;
}

int node_from_json(const nlohmann::json& j, int depth, Tree& t) {
    const int id = static_cast<int>(t.nodes.size());
    Node n;
    n.depth = depth;
    const auto& c = j.at("counts");
    n.counts = {c.at(0).get<int>(), c.at(1).get<int>()};
    t.nodes.push_back(n);
    if (j.contains("feature")) {
        t.nodes[id].feature = j.at("feature").get<int>();
        t.nodes[id].threshold = j.at("threshold").get<double>();
        const int l = node_from_json(j.at("left"), depth + 1, t);
        t.nodes[id].left = l;
        const int r = node_from_json(j.at("right"), depth + 1, t);
        t.nodes[id].right = r;
    }
    return id;
}

std::vector<int> labels_of(const dataset::Dataset& d, const std::function<bool(const dataset::LabeledSample&)>& f) {
    std::vector<int> y;
    y.reserve(d.rows.size());
    for (const auto& r : d.rows) y.push_back(f(r) ? 1 : 0);
    return y;
}

}  // namespace

double gini(const std::vector<double>& counts) {
    double n = 0.0;
    for (double c : counts) {
        if (!(c >= 0.0)) throw invalid_error("gini: negative class count");
        n += c;
    }
    if (n <= 0.0) throw invalid_error("gini: all class counts are zero");
    double s = 0.0;
    for (double c : counts) s += (c / n) * (c / n);
    return 1.0 - s;
}

void TreeParams::validate() const {
    if (max_depth < 0) throw config_error("tree max_depth must be non-negative");
    if (!(ccp_alpha >= 0.0)) throw config_error("tree ccp_alpha must be non-negative");
    if (min_samples_split < 2) throw config_error("tree min_samples_split must be at least 2");
}

int Tree::predict(const Eigen::VectorXd& x) const {
    int i = 0;
    while (!nodes[i].leaf()) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].label();
}

std::vector<int> Tree::predict(const Eigen::MatrixXd& X) const {
    std::vector<int> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index r = 0; r < X.rows(); ++r) out[r] = predict(Eigen::VectorXd(X.row(r).transpose()));
    return out;
}

int Tree::depth() const {
    int d = 0;
    for (const Node& n : nodes) d = std::max(d, n.depth);
    return d;
}

int Tree::n_leaves() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.leaf(); }));
}

nlohmann::ordered_json Tree::to_json() const {
    nlohmann::ordered_json j;
    j["features"] = feature_names;
    j["depth"] = depth();
    j["leaves"] = n_leaves();
    j["root"] = node_json(*this, 0);
    return j;
}

Tree Tree::from_json(const nlohmann::json& j) {
    Tree t;
    try {
        t.feature_names = j.at("features").get<std::vector<std::string>>();
        node_from_json(j.at("root"), 0, t);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("tree JSON: ") + e.what());
    }
    return t;
}

Split best_split(const Eigen::MatrixXd& X, const std::vector<int>& y, const std::vector<int>& rows) {
    Split best;
    best.score = std::numeric_limits<double>::infinity();
    std::array<int, 2> total{};
    for (int r : rows) ++total[y[r]];
    const int n = static_cast<int>(rows.size());
    std::vector<int> order(rows);
    for (int f = 0; f < static_cast<int>(X.cols()); ++f) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return X(a, f) < X(b, f) || (X(a, f) == X(b, f) && a < b);
        });
        std::array<int, 2> left{};
        for (int k = 0; k + 1 < n; ++k) {
            ++left[y[order[k]]];
            const double a = X(order[k], f), b = X(order[k + 1], f);
            if (!(a < b)) continue;
            const int nl = k + 1, nr = n - nl;
            const double score =
                (nl * gini2(left[0], left[1]) + nr * gini2(total[0] - left[0], total[1] - left[1])) / n;
            if (score < best.score - kTieTol) {
                double t = a + (b - a) / 2.0;
                if (t >= b) t = a;
                best = {f, t, score};
            }
        }
    }
    if (best.feature < 0) best.score = 0.0;
    return best;
}

Tree prune(const Tree& grown, double ccp_alpha) {
    if (!(ccp_alpha >= 0.0)) throw config_error("ccp_alpha must be non-negative");
    if (ccp_alpha == 0.0 || grown.nodes.empty()) return grown;
    Tree t = grown;
    const double total = t.nodes[0].n();
    // Weighted impurity R(node) = n/N * gini.
    auto risk = [&](const Node& n) { return n.n() / total * gini2(n.counts[0], n.counts[1]); };
    const int m = static_cast<int>(t.nodes.size());
    std::vector<double> subtree_risk(m);
    std::vector<int> subtree_leaves(m);
    for (;;) {
        // Preorder storage means children follow their parent; fold in reverse.
        for (int i = m - 1; i >= 0; --i) {
            const Node& n = t.nodes[i];
            if (n.leaf()) {
                subtree_risk[i] = risk(n);
                subtree_leaves[i] = 1;
            } else {
                subtree_risk[i] = subtree_risk[n.left] + subtree_risk[n.right];
                subtree_leaves[i] = subtree_leaves[n.left] + subtree_leaves[n.right];
            }
        }
        int weakest = -1;
        double alpha = std::numeric_limits<double>::infinity();
        std::vector<bool> live(m, false);
        live[0] = true;
        for (int i = 0; i < m; ++i) {
            const Node& n = t.nodes[i];
            if (!live[i] || n.leaf()) continue;
            live[n.left] = live[n.right] = true;
            const double a = (risk(n) - subtree_risk[i]) / (subtree_leaves[i] - 1);
            if (a < alpha) {
                alpha = a;
                weakest = i;
            }
        }
        if (weakest < 0 || alpha > ccp_alpha) break;
        t.nodes[weakest].feature = -1;
    }
    Tree out;
    out.feature_names = t.feature_names;
    compact(t, 0, out);
    return out;
}

Tree train(const Eigen::MatrixXd& X, const std::vector<int>& y, const TreeParams& params,
           std::vector<std::string> feature_names) {
    params.validate();
    if (X.rows() != static_cast<Eigen::Index>(y.size())) throw invalid_error("train: feature and label counts differ");
    if (y.size() < 2) throw data_error("train: need at least 2 samples");
    for (int v : y) {
        if (v != 0 && v != 1) throw invalid_error("train: labels must be 0 or 1");
    }
    if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != X.cols()) {
        throw invalid_error("train: feature name count differs from the column count");
    }
    Tree t;
    t.feature_names = std::move(feature_names);
    std::vector<int> rows(y.size());
    std::iota(rows.begin(), rows.end(), 0);
    grow(t, X, y, std::move(rows), 0, params);
    return prune(t, params.ccp_alpha);
}

double f1(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw invalid_error("f1: length mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        tp += predicted[i] == 1 && truth[i] == 1;
        fp += predicted[i] == 1 && truth[i] == 0;
        fn += predicted[i] == 0 && truth[i] == 1;
    }
    const long den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2.0 * tp / static_cast<double>(den);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw invalid_error("accuracy: length mismatch");
    if (truth.empty()) return 0.0;
    long ok = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) ok += predicted[i] == truth[i];
    return static_cast<double>(ok) / static_cast<double>(truth.size());
}

Eigen::MatrixXd features(const dataset::Dataset& d) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(d.rows.size()), static_cast<Eigen::Index>(d.names.size()));
    for (std::size_t i = 0; i < d.rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = d.rows[i].x.transpose();
    return X;
}

std::vector<int> secure_labels(const dataset::Dataset& d) {
    return labels_of(d, [](const auto& r) { return r.secure; });
}

TrainTestSplit split(const dataset::Dataset& d, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw config_error("train fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(d.rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    std::vector<bool> in_train(d.rows.size(), false);
    for (std::size_t k = 0; k < n_train; ++k) in_train[idx[k]] = true;
    TrainTestSplit s;
    s.train.names = s.test.names = d.names;
    for (std::size_t i = 0; i < d.rows.size(); ++i) (in_train[i] ? s.train : s.test).rows.push_back(d.rows[i]);
    return s;
}

std::vector<FoldScore> cross_validate(const Eigen::MatrixXd& X, const std::vector<int>& y, int folds,
                                      const TreeParams& params, std::uint64_t seed) {
    const int n = static_cast<int>(y.size());
    if (folds < 2 || folds > n) throw config_error("cross-validation needs 2 <= folds <= samples");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<FoldScore> out;
    for (int f = 0; f < folds; ++f) {
        const int lo = static_cast<int>(static_cast<long>(n) * f / folds);
        const int hi = static_cast<int>(static_cast<long>(n) * (f + 1) / folds);
        std::vector<int> tr, te;
        for (int k = 0; k < n; ++k) (k >= lo && k < hi ? te : tr).push_back(idx[k]);
        std::sort(tr.begin(), tr.end());
        std::sort(te.begin(), te.end());
        auto take = [&](const std::vector<int>& rows, Eigen::MatrixXd& Xs, std::vector<int>& ys) {
            Xs.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
            ys.clear();
            for (std::size_t k = 0; k < rows.size(); ++k) {
                Xs.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
                ys.push_back(y[rows[k]]);
            }
        };
        Eigen::MatrixXd Xtr, Xte;
        std::vector<int> ytr, yte;
        take(tr, Xtr, ytr);
        take(te, Xte, yte);
        const Tree t = train(Xtr, ytr, params);
        out.push_back({accuracy(t.predict(Xtr), ytr), accuracy(t.predict(Xte), yte)});
    }
    return out;
}

std::string to_string(Cause c) {
    switch (c) {
        case Cause::Feasibility: return "feasibility";
        case Cause::Stability: return "stability";
        case Cause::Both: return "both";
    }
    return "?";
}

int Histogram::total() const {
    int s = undefined[0] + undefined[1] + undefined[2];
    for (const auto& [k, c] : bins) s += c[0] + c[1] + c[2];
    return s;
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["train_sets"] = train_names;
    j["test_sets"] = test_names;
    j["f1"] = f1;
    j["boundary_size"] = boundary_size;
    j["pooled_test_size"] = pooled_size;
    nlohmann::ordered_json cvj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < train_names.size(); ++i) {
        nlohmann::ordered_json folds = nlohmann::ordered_json::array();
        double tr = 0.0, te = 0.0;
        for (const auto& f : cv[i]) {
            folds.push_back({{"train_accuracy", f.train_accuracy}, {"test_accuracy", f.test_accuracy}});
            tr += f.train_accuracy;
            te += f.test_accuracy;
        }
        const double k = cv[i].empty() ? 1.0 : static_cast<double>(cv[i].size());
        cvj[train_names[i]] = {{"mean_train_accuracy", tr / k}, {"mean_test_accuracy", te / k}, {"folds", folds}};
    }
    j["cross_validation"] = cvj;
    nlohmann::ordered_json mis = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < train_names.size(); ++i) mis[train_names[i]] = misclassified[i].total();
    j["misclassified"] = mis;
    return j;
}

void EvalReport::write_histogram_csv(std::ostream& out) const {
    out << "train,bin_lo,bin_hi,feasibility,stability,both\n";
    char buf[64];
    for (std::size_t i = 0; i < train_names.size(); ++i) {
        const Histogram& h = misclassified[i];
        for (const auto& [k, c] : h.bins) {
            std::snprintf(buf, sizeof buf, "%.6g,%.6g", k * h.bin_width, (k + 1) * h.bin_width);
            out << train_names[i] << ',' << buf << ',' << c[0] << ',' << c[1] << ',' << c[2] << '\n';
        }
        if (h.undefined != std::array<int, 3>{}) {
            out << train_names[i] << ",,," << h.undefined[0] << ',' << h.undefined[1] << ',' << h.undefined[2]
                << '\n';
        }
    }
}

EvalReport cross_evaluate(const std::vector<NamedDataset>& sets, const dataset::SecuritySpec& spec,
                          const EvalConfig& cfg) {
    spec.validate();
    cfg.tree.validate();
    if (sets.empty()) throw data_error("cross_evaluate: no datasets");
    if (cfg.boundary_source >= sets.size()) throw config_error("cross_evaluate: boundary source out of range");
    if (!(cfg.boundary_lo < cfg.boundary_hi) || !(cfg.bin_width > 0.0)) {
        throw config_error("cross_evaluate: bad boundary band or bin width");
    }
    for (const auto& s : sets) {
        if (s.data.names != sets.front().data.names) {
            throw data_error("cross_evaluate: dataset '" + s.name + "' has different feature columns");
        }
        if (s.data.rows.size() < 4) throw data_error("cross_evaluate: dataset '" + s.name + "' is too small");
    }
    const std::size_t m = sets.size();
    EvalReport rep;
    std::vector<TrainTestSplit> parts;
    for (std::size_t i = 0; i < m; ++i) {
        rep.train_names.push_back(sets[i].name);
        parts.push_back(split(sets[i].data, cfg.train_fraction, cfg.seed));
    }
    rep.test_names = rep.train_names;
    rep.test_names.push_back("boundary");

    std::vector<dataset::Dataset> tests;
    for (const auto& p : parts) tests.push_back(p.test);
    dataset::Dataset boundary;
    boundary.names = sets.front().data.names;
    for (const auto& r : parts[cfg.boundary_source].test.rows) {
        if (r.zeta && *r.zeta > cfg.boundary_lo && *r.zeta < cfg.boundary_hi) boundary.rows.push_back(r);
    }
    rep.boundary_size = static_cast<int>(boundary.rows.size());
    tests.push_back(boundary);

    dataset::Dataset pooled;
    pooled.names = boundary.names;
    for (const auto& p : parts) pooled.rows.insert(pooled.rows.end(), p.test.rows.begin(), p.test.rows.end());
    rep.pooled_size = static_cast<int>(pooled.rows.size());
    const Eigen::MatrixXd Xp = features(pooled);
    const std::vector<int> yp = secure_labels(pooled);
    auto damped = [&](const dataset::LabeledSample& r) { return r.zeta && spec.secure_damping(*r.zeta); };
    const std::vector<int> fp_truth = labels_of(pooled, [](const auto& r) { return r.feasible; });
    const std::vector<int> dp_truth = labels_of(pooled, damped);

    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::MatrixXd X = features(parts[i].train);
        const std::vector<int> y = secure_labels(parts[i].train);
        const Tree tree = train(X, y, cfg.tree, parts[i].train.names);
        rep.cv.push_back(cross_validate(X, y, std::min<int>(cfg.folds, static_cast<int>(y.size())), cfg.tree,
                                        cfg.seed + 1));
        std::vector<double> row;
        for (const auto& t : tests) {
            row.push_back(t.rows.empty() ? 0.0 : f1(tree.predict(features(t)), secure_labels(t)));
        }
        rep.f1.push_back(row);

        const Tree feas_tree = train(X, labels_of(parts[i].train, [](const auto& r) { return r.feasible; }), cfg.tree);
        const Tree damp_tree = train(X, labels_of(parts[i].train, damped), cfg.tree);
        const auto pred = tree.predict(Xp);
        const auto pf = feas_tree.predict(Xp);
        const auto pd = damp_tree.predict(Xp);
        Histogram h;
        h.bin_width = cfg.bin_width;
        for (const auto& r : pooled.rows) {
            if (r.zeta) h.bins[static_cast<long>(std::floor(*r.zeta / cfg.bin_width))];
        }
        for (std::size_t k = 0; k < yp.size(); ++k) {
            if (pred[k] == yp[k]) continue;
            const bool fw = pf[k] != fp_truth[k];
            const bool dw = pd[k] != dp_truth[k];
            Cause c = Cause::Both;
            if (fw != dw) {
                c = fw ? Cause::Feasibility : Cause::Stability;
            } else if (!fw && yp[k] == 0) {
                // Neither auxiliary tree errs on a false positive: use the violated labels.
                if (fp_truth[k] && !dp_truth[k]) c = Cause::Stability;
                if (!fp_truth[k] && dp_truth[k]) c = Cause::Feasibility;
            }
            const auto& r = pooled.rows[k];
            auto& slot = r.zeta ? h.bins[static_cast<long>(std::floor(*r.zeta / cfg.bin_width))] : h.undefined;
            ++slot[static_cast<int>(c)];
        }
        rep.misclassified.push_back(std::move(h));
        rep.trees.push_back(tree);
    }
    return rep;
}

}  // namespace dsagen::mlbench
