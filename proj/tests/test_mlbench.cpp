#include <doctest.h>

#include "dsagen/error.hpp"
#include "dsagen/mlbench.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

using namespace dsagen;
using namespace dsagen::mlbench;

namespace {

struct Data {
    Eigen::MatrixXd X;
    std::vector<int> y;
};

/// Random set; odd features take few integer values to force duplicates.
Data random_set(std::mt19937_64& rng) {
    const int n = std::uniform_int_distribution<int>(2, 50)(rng);
    const int d = std::uniform_int_distribution<int>(1, 4)(rng);
    Data s{Eigen::MatrixXd(n, d), std::vector<int>(n)};
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < d; ++f) s.X(i, f) = f % 2 ? std::floor(4.0 * u(rng)) : u(rng);
        s.y[i] = (s.X(i, 0) + 0.3 * u(rng) > 0.0) ? 1 : 0;
    }
    return s;
}

struct Candidate {
    int feature = -1;
    double threshold = 0.0;
    double score = std::numeric_limits<double>::infinity();
};

/// Every feature and every midpoint between distinct values, scored by
/// direct partitioning; Gini written as 2 a b / n^2.
Candidate brute_force_split(const Data& s) {
    Candidate best;
    const int n = static_cast<int>(s.y.size());
    for (int f = 0; f < s.X.cols(); ++f) {
        std::vector<double> vals(s.X.col(f).data(), s.X.col(f).data() + n);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            double t = vals[k] + (vals[k + 1] - vals[k]) / 2.0;
            if (t >= vals[k + 1]) t = vals[k];
            double l0 = 0, l1 = 0, r0 = 0, r1 = 0;
            for (int i = 0; i < n; ++i) {
                if (s.X(i, f) <= t) (s.y[i] ? l1 : l0) += 1;
                else (s.y[i] ? r1 : r0) += 1;
            }
            const double gl = 2.0 * l0 * l1 / ((l0 + l1) * (l0 + l1));
            const double gr = 2.0 * r0 * r1 / ((r0 + r1) * (r0 + r1));
            const double score = ((l0 + l1) * gl + (r0 + r1) * gr) / n;
            if (score < best.score - 1e-12) best = {f, t, score};
        }
    }
    return best;
}

bool depth_ok(const Tree& t, int i, int depth, int cap) {
    const Node& n = t.nodes[i];
    if (n.depth != depth || depth > cap) return false;
    if (n.leaf()) return true;
    const Node& l = t.nodes[n.left];
    const Node& r = t.nodes[n.right];
    if (l.counts[0] + r.counts[0] != n.counts[0] || l.counts[1] + r.counts[1] != n.counts[1]) return false;
    return depth_ok(t, n.left, depth + 1, cap) && depth_ok(t, n.right, depth + 1, cap);
}

/// Minimum over all prunings of R(T) + alpha |leaves|, R weighted by n / N.
double min_cost(const Tree& t, int i, double alpha, double total) {
    const Node& n = t.nodes[i];
    const double a = n.counts[0], b = n.counts[1];
    const double leaf = (a + b) / total * (2.0 * a * b / ((a + b) * (a + b))) + alpha;
    if (n.leaf()) return leaf;
    return std::min(leaf, min_cost(t, n.left, alpha, total) + min_cost(t, n.right, alpha, total));
}

double cost(const Tree& t, double alpha) {
    double c = 0.0;
    const double total = t.nodes[0].n();
    for (const Node& n : t.nodes) {
        if (!n.leaf()) continue;
        const double a = n.counts[0], b = n.counts[1];
        c += (a + b) / total * (2.0 * a * b / ((a + b) * (a + b))) + alpha;
    }
    return c;
}

dataset::Dataset rule_set(int n, std::uint64_t seed, int feature) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<dataset::RawResult> raw;
    for (int i = 0; i < n; ++i) {
        dataset::RawResult r;
        r.x = Eigen::Vector3d(u(rng), u(rng), u(rng));
        r.converged = true;
        r.feasible = r.x[2] > 0.2;
        r.zeta = 0.03 + 0.1 * (r.x[feature] - 0.5);
        raw.push_back(r);
    }
    return dataset::make_dataset({"a", "b", "c"}, raw, dataset::SecuritySpec{});
}

}  // namespace

TEST_CASE("gini impurity") {
    CHECK(gini({10, 0}) == 0.0);
    CHECK(gini({5, 5}) == 0.5);
    CHECK(gini({3, 1}) == 0.375);
    CHECK_THROWS_AS(gini({0, 0}), Error);
    // Maximal at the uniform mix.
    for (int a = 0; a <= 20; ++a) CHECK(gini({double(a), double(20 - a)}) <= 0.5);
}

TEST_CASE("F1 score") {
    std::vector<int> pred, truth;
    for (int i = 0; i < 50; ++i) { pred.push_back(1); truth.push_back(1); }
    for (int i = 0; i < 25; ++i) { pred.push_back(1); truth.push_back(0); }
    for (int i = 0; i < 25; ++i) { pred.push_back(0); truth.push_back(1); }
    for (int i = 0; i < 10; ++i) { pred.push_back(0); truth.push_back(0); }
    CHECK(f1(pred, truth) == doctest::Approx(100.0 / 150.0).epsilon(1e-15));
    CHECK(f1(truth, truth) == 1.0);
    CHECK(f1({0, 0}, {0, 0}) == 0.0);
    std::mt19937_64 rng(2);
    std::vector<std::size_t> perm(pred.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> p2, t2;
    for (auto i : perm) { p2.push_back(pred[i]); t2.push_back(truth[i]); }
    CHECK(f1(p2, t2) == f1(pred, truth));
    CHECK_THROWS_AS(f1({1}, {1, 0}), Error);
}

TEST_CASE("separable data needs one split") {
    Eigen::MatrixXd X(8, 1);
    X << -4, -3, -2, -1, 0, 1, 2, 3;
    const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
    const Tree t = train(X, y);
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.nodes[0].feature == 0);
    CHECK(t.nodes[0].threshold == -0.5);
    CHECK(accuracy(t.predict(X), y) == 1.0);
}

TEST_CASE("XOR is beyond a single split") {
    Eigen::MatrixXd X(40, 2);
    std::vector<int> y;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int i = 0; i < 40; ++i) {
        const int qx = i % 2, qy = (i / 2) % 2;
        X(i, 0) = qx ? u(rng) : -u(rng);
        X(i, 1) = qy ? u(rng) : -u(rng);
        y.push_back(qx ^ qy);
    }
    TreeParams p;
    p.max_depth = 1;
    p.ccp_alpha = 0.0;
    CHECK(accuracy(train(X, y, p).predict(X), y) <= 0.75);
    // On exact quadrant corners every root split has zero gain; depth 2 then separates.
    Eigen::MatrixXd C(8, 2);
    C << -1, -1, -1, 1, 1, -1, 1, 1, -1, -1, -1, 1, 1, -1, 1, 1;
    const std::vector<int> yc{0, 1, 1, 0, 0, 1, 1, 0};
    p.max_depth = 2;
    CHECK(accuracy(train(C, yc, p).predict(C), yc) == 1.0);
}

TEST_CASE("greedy first split equals the exhaustive best split") {
    std::mt19937_64 rng(2024);
    int compared = 0;
    for (int rep = 0; rep < 25; ++rep) {
        const Data s = random_set(rng);
        std::vector<int> rows(s.y.size());
        std::iota(rows.begin(), rows.end(), 0);
        const Split got = best_split(s.X, s.y, rows);
        const Candidate want = brute_force_split(s);
        CHECK(got.feature == want.feature);
        if (want.feature < 0) continue;
        ++compared;
        CHECK(got.threshold == want.threshold);
        CHECK(std::abs(got.score - want.score) <= 1e-12);
        TreeParams p;
        p.ccp_alpha = 0.0;
        const Tree t = train(s.X, s.y, p);
        const bool pure = std::count(s.y.begin(), s.y.end(), 1) % static_cast<long>(s.y.size()) == 0;
        if (!pure) {
            CHECK(t.nodes[0].feature == want.feature);
            CHECK(t.nodes[0].threshold == want.threshold);
        }
    }
    CHECK(compared >= 20);
}

TEST_CASE("tree structure invariants") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const Data s = random_set(rng);
        for (int cap : {0, 1, 3, 5}) {
            TreeParams p;
            p.max_depth = cap;
            p.ccp_alpha = 0.0;
            const Tree grown = train(s.X, s.y, p);
            CHECK(depth_ok(grown, 0, 0, cap));
            CHECK(grown.nodes[0].n() == static_cast<int>(s.y.size()));
            for (double alpha : {0.005, 0.01, 0.05}) {
                const Tree pruned = prune(grown, alpha);
                CHECK(pruned.nodes.size() <= grown.nodes.size());
                CHECK(depth_ok(pruned, 0, 0, cap));
                // Pruning reaches the minimal cost-complexity subtree.
                CHECK(cost(pruned, alpha) == doctest::Approx(min_cost(grown, 0, alpha, grown.nodes[0].n())).epsilon(1e-12));
            }
            const Tree same = prune(grown, 0.0);
            CHECK(same.to_json().dump() == grown.to_json().dump());
        }
    }
}

TEST_CASE("single-class input gives a leaf") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(10, 2);
    const Tree t = train(X, std::vector<int>(10, 1));
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.predict(Eigen::VectorXd(X.row(0).transpose())) == 1);
    CHECK_THROWS_AS(train(X.topRows(1), {1}), Error);
    CHECK_THROWS_AS(train(X, std::vector<int>(10, 2)), Error);
}

TEST_CASE("tree JSON round trip") {
    std::mt19937_64 rng(5);
    const Data s = random_set(rng);
    std::vector<std::string> names;
    for (int f = 0; f < s.X.cols(); ++f) names.push_back("f" + std::to_string(f));
    TreeParams p;
    p.ccp_alpha = 0.0;
    const Tree t = train(s.X, s.y, p, names);
    const std::string text = t.to_json().dump(2);
    const Tree back = Tree::from_json(nlohmann::json::parse(text));
    CHECK(back.to_json().dump(2) == text);
    CHECK(back.predict(s.X) == t.predict(s.X));
    CHECK_THROWS_AS(Tree::from_json(nlohmann::json::parse("{\"root\":{}}")), Error);
}

TEST_CASE("train/test split and cross-validation") {
    const dataset::Dataset d = rule_set(203, 1, 0);
    const TrainTestSplit s = split(d, 0.75, 9);
    CHECK(s.train.rows.size() == 152);
    CHECK(s.test.rows.size() == 51);
    std::vector<std::int64_t> ids;
    for (const auto& r : s.train.rows) ids.push_back(r.id);
    for (const auto& r : s.test.rows) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == static_cast<std::int64_t>(i));
    CHECK(split(d, 0.75, 9).test.rows.front().id == s.test.rows.front().id);

    const auto folds = cross_validate(features(s.train), secure_labels(s.train), 10, TreeParams{}, 4);
    REQUIRE(folds.size() == 10);
    for (const auto& f : folds) {
        CHECK(f.train_accuracy >= 0.9);
        CHECK(f.test_accuracy >= 0.8);
        CHECK(f.test_accuracy <= 1.0);
    }
    CHECK_THROWS_AS(cross_validate(features(s.train), secure_labels(s.train), 1, TreeParams{}, 4), Error);
}

TEST_CASE("cross evaluation on two rules") {
    const std::vector<NamedDataset> sets{{"first", rule_set(600, 2, 0)}, {"second", rule_set(600, 3, 1)}};
    const dataset::SecuritySpec spec;
    const EvalReport rep = cross_evaluate(sets, spec, EvalConfig{});
    REQUIRE(rep.f1.size() == 2);
    REQUIRE(rep.test_names.size() == 3);
    CHECK(rep.test_names.back() == "boundary");
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(rep.f1[i].size() == 3);
        for (double v : rep.f1[i]) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        // Same distribution scores at least as well as the other one.
        CHECK(rep.f1[i][i] >= rep.f1[i][1 - i]);
        CHECK(rep.cv[i].size() == 10);
    }
    CHECK(rep.boundary_size > 0);

    // Histogram totals match a direct count on the pooled test rows.
    dataset::Dataset pooled;
    pooled.names = sets[0].data.names;
    for (const auto& s : sets) {
        const auto part = split(s.data, 0.75, 1).test;
        pooled.rows.insert(pooled.rows.end(), part.rows.begin(), part.rows.end());
    }
    CHECK(rep.pooled_size == static_cast<int>(pooled.rows.size()));
    for (std::size_t i = 0; i < 2; ++i) {
        const auto pred = rep.trees[i].predict(features(pooled));
        const auto truth = secure_labels(pooled);
        int wrong = 0;
        for (std::size_t k = 0; k < truth.size(); ++k) wrong += pred[k] != truth[k];
        CHECK(rep.misclassified[i].total() == wrong);
        // Bins span the observed damping range.
        for (const auto& r : pooled.rows) {
            CHECK(rep.misclassified[i].bins.count(static_cast<long>(std::floor(*r.zeta / 0.0025))) == 1);
        }
    }
    std::ostringstream csv;
    rep.write_histogram_csv(csv);
    CHECK(csv.str().rfind("train,bin_lo,bin_hi,feasibility,stability,both\n", 0) == 0);
    const auto j = rep.to_json();
    CHECK(j["f1"].size() == 2);

    std::vector<NamedDataset> bad = sets;
    bad[1].data.names[0] = "z";
    CHECK_THROWS_AS(cross_evaluate(bad, spec, EvalConfig{}), Error);
}
