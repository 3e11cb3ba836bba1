#include <doctest.h>

#include "dsagen/error.hpp"
#include "dsagen/samplers.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace dsagen;
using namespace dsagen::samplers;

namespace {

netmodel::Box unit_box(int dim, double lo = 0.0, double hi = 1.0) {
    return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
}

Eigen::MatrixXd sample_cov(const std::vector<Eigen::VectorXd>& pts) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd X(n, pts.front().size());
    for (Eigen::Index i = 0; i < n; ++i) X.row(i) = pts[i].transpose();
    const Eigen::MatrixXd c = X.rowwise() - X.colwise().mean();
    return c.transpose() * c / static_cast<double>(n - 1);
}

struct Nine {
    netmodel::NetworkModel model = fixtures::case9();
    smallsignal::DynamicsData dyn =
        smallsignal::load_dynamics(std::string(DSAGEN_DATA_DIR) + "/case9.dyn.json", model);
    relaxation::TightenedBounds bounds = relaxation::initial_bounds(model, 0.1);
    walker::Context ctx() const { return walker::Context{model, dyn, bounds}; }
};

}  // namespace

TEST_CASE("one-dimensional Latin hypercube") {
    const auto pts = lhc_sample(unit_box(1), 4, 9);
    REQUIRE(pts.size() == 4);
    std::vector<int> count(4, 0);
    for (const auto& p : pts) {
        REQUIRE(p[0] >= 0.0);
        REQUIRE(p[0] <= 1.0);
        ++count[std::min(3, static_cast<int>(p[0] * 4.0))];
    }
    for (int c : count) CHECK(c == 1);
}

TEST_CASE("every marginal is exactly stratified") {
    netmodel::Box box{Eigen::VectorXd(5), Eigen::VectorXd(5)};
    box.lower << -1.0, 0.0, 0.9, 2.5, 100.0;
    box.upper << 1.0, 0.01, 1.1, 7.5, 250.0;
    for (int n : {1, 7, 64, 501}) {
        const auto pts = lhc_sample(box, n, 12345);
        REQUIRE(static_cast<int>(pts.size()) == n);
        for (int c = 0; c < 5; ++c) {
            std::vector<int> count(n, 0);
            for (const auto& p : pts) {
                CHECK(box.contains(p));
                const double t = (p[c] - box.lower[c]) / (box.upper[c] - box.lower[c]);
                ++count[std::min(n - 1, static_cast<int>(std::floor(t * n)))];
            }
            for (int k : count) CHECK(k == 1);
        }
    }
    CHECK_THROWS_AS(lhc_sample(box, 0, 1), Error);
}

TEST_CASE("Latin hypercube is seed-deterministic") {
    const auto a = lhc_sample(unit_box(3), 20, 4);
    const auto b = lhc_sample(unit_box(3), 20, 4);
    const auto c = lhc_sample(unit_box(3), 20, 5);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 20; ++i) {
        all_equal = all_equal && a[i] == b[i];
        any_diff = any_diff || a[i] != c[i];
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("normal fit recovers a known covariance") {
    Eigen::Matrix3d sigma;
    sigma << 2.0, 0.6, -0.3,
             0.6, 1.0, 0.2,
             -0.3, 0.2, 0.5;
    const Eigen::Vector3d mu(1.0, -2.0, 0.5);
    const Eigen::Matrix3d chol = sigma.llt().matrixL();
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z;
    const int n = 20000;
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < n; ++i) pts.push_back(mu + chol * Eigen::Vector3d(z(rng), z(rng), z(rng)));
    const MvnSpec fit = fit_mvn(pts);
    CHECK(fit.s == 0.25);
    for (int i = 0; i < 3; ++i) {
        // Five standard errors of the mean.
        CHECK(std::abs(fit.mu[i] - mu[i]) < 5.0 * std::sqrt(sigma(i, i) / n));
        for (int j = 0; j < 3; ++j) {
            // Sampling variance of a covariance entry is (s_ii s_jj + s_ij^2) / n.
            const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
            CHECK(std::abs(fit.sigma(i, j) - sigma(i, j)) < 5.0 * se);
        }
    }
    CHECK(fit.sigma == fit.sigma.transpose());
}

TEST_CASE("fit needs dim + 1 points") {
    std::vector<Eigen::VectorXd> pts(3, Eigen::VectorXd::Zero(3));
    try {
        fit_mvn(pts);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InsufficientData);
        CHECK(std::string(e.what()).find("insufficient HIC seeds for MVN fit") != std::string::npos);
    }
    pts.emplace_back(Eigen::VectorXd::Zero(3));
    // Identical points still give a usable, regularized fit.
    const MvnSpec fit = fit_mvn(pts);
    CHECK(fit.sigma.isApprox(1e-8 * Eigen::MatrixXd::Identity(3, 3)));
    MvnSpec bad = fit;
    bad.s = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad.s = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = fit;
    bad.sigma(0, 1) = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("interior draws have the reduced covariance") {
    MvnSpec m;
    m.mu = Eigen::Vector2d(0.0, 0.0);
    m.sigma.resize(2, 2);
    m.sigma << 1.0, 0.4, 0.4, 0.5;
    m.s = 0.25;
    // Box edges at more than six standard deviations.
    const MvnDraws d = mvn_sample(m, unit_box(2, -4.0, 4.0), 20000, 3);
    CHECK(d.clamped == 0);
    const Eigen::MatrixXd c = sample_cov(d.points);
    const Eigen::MatrixXd want = m.reduced();
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) CHECK(std::abs(c(i, j) - want(i, j)) <= 0.1 * std::abs(want(i, j)));
    }
}

TEST_CASE("draws stay in the box") {
    MvnSpec m;
    m.mu = Eigen::Vector3d(0.9, 0.5, 0.5);
    m.sigma = Eigen::Matrix3d::Identity();
    m.s = 1.0;
    netmodel::Box box = unit_box(3);
    box.lower[2] = box.upper[2] = 0.5;
    const MvnDraws d = mvn_sample(m, box, 500, 8);
    CHECK(d.rejected > 0);
    for (const auto& p : d.points) {
        CHECK(box.contains(p));
        CHECK(p[2] == 0.5);
    }
    // A mean far outside forces the fallback.
    m.mu = Eigen::Vector3d(50.0, 50.0, 0.5);
    const MvnDraws far = mvn_sample(m, box, 10, 8, 5);
    CHECK(far.clamped == 10);
    CHECK(far.rejected == 50);
    for (const auto& p : far.points) CHECK(box.contains(p));
}

TEST_CASE("shrinking the scale collapses the draws onto the mean") {
    MvnSpec m;
    m.mu = Eigen::Vector2d(0.5, 0.5);
    m.sigma = Eigen::Matrix2d::Identity() * 0.01;
    double last = 1e300;
    for (double s : {1.0, 0.25, 1e-2, 1e-4, 1e-6}) {
        m.s = s;
        const MvnDraws d = mvn_sample(m, unit_box(2), 4000, 5);
        const double tr = sample_cov(d.points).trace();
        CHECK(tr < last);
        // Trace of s Sigma is 0.02 s; allow sampling noise.
        CHECK(std::abs(tr - 0.02 * s) < 0.1 * 0.02 * s);
        last = tr;
    }
}

TEST_CASE("LHC benchmark on the nine-bus case") {
    const Nine n;
    const walker::Context ctx = n.ctx();
    const dataset::SecuritySpec spec;
    const BenchmarkResult r = lhc_benchmark(ctx, spec, 40, 11);
    CHECK(r.drawn == 40);
    CHECK(r.infeasible > 0);
    int lhc = 0, proj = 0, lhc_feasible = 0;
    for (std::size_t i = 0; i < r.data.rows.size(); ++i) {
        const auto& row = r.data.rows[i];
        CHECK(row.id == static_cast<std::int64_t>(i));
        if (row.source == dataset::Source::LHC) {
            ++lhc;
            lhc_feasible += row.feasible;
        } else {
            REQUIRE(row.source == dataset::Source::Projection);
            ++proj;
            CHECK(row.feasible);
            // A projection follows its infeasible sample and keeps its loads.
            REQUIRE(i > 0);
            const auto& prev = r.data.rows[i - 1];
            CHECK(prev.source == dataset::Source::LHC);
            CHECK_FALSE(prev.feasible);
            CHECK(prev.seed == row.seed);
            const auto& lay = n.model.layout();
            CHECK(prev.x.tail(prev.x.size() - lay.pd_offset()) == row.x.tail(row.x.size() - lay.pd_offset()));
        }
    }
    CHECK(lhc + r.dropped == r.drawn);
    CHECK(proj == r.infeasible - r.dropped);
    CHECK(lhc - lhc_feasible == proj);
    const auto st = dataset::stats(r.data);
    CHECK(st.feasible >= 0.5);

    // Same schema as the walker output.
    std::ostringstream out;
    dataset::write_csv(r.data, out);
    std::istringstream in(out.str());
    CHECK(dataset::read_csv(in).names == n.model.layout().names());

    const BenchmarkResult again = lhc_benchmark(ctx, spec, 40, 11, 3);
    std::ostringstream out2;
    dataset::write_csv(again.data, out2);
    CHECK(out2.str() == out.str());
}

TEST_CASE("importance benchmark") {
    const Nine n;
    const walker::Context ctx = n.ctx();
    const dataset::SecuritySpec spec;
    ImportanceConfig cfg;
    cfg.n_init = 5;
    cfg.n = 10;
    CHECK_THROWS_WITH_AS(importance_benchmark(ctx, spec, cfg, 2), doctest::Contains("insufficient HIC seeds"), Error);

    cfg.n_init = 300;
    cfg.n = 30;
    const ImportanceResult r = importance_benchmark(ctx, spec, cfg, 2);
    MESSAGE("HIC seeds " << r.seeds << " of " << r.initial.data.rows.size());
    CHECK(r.seeds >= n.model.layout().dimension() + 1);
    CHECK(r.draws.points.size() == 30);
    for (const auto& p : r.draws.points) CHECK(n.bounds.box.contains(p));
    int hic = 0, imp = 0;
    for (const auto& row : r.result.data.rows) {
        CHECK((row.source == dataset::Source::Importance || row.source == dataset::Source::Projection));
        if (row.source == dataset::Source::Importance) {
            ++imp;
            hic += row.in_hic;
        }
    }
    CHECK(imp + r.result.dropped == 30);
    // Sampling concentrates on the band compared with the uniform pass.
    const double base = static_cast<double>(r.seeds) / r.initial.drawn;
    MESSAGE("HIC share " << static_cast<double>(hic) / imp << " vs uniform " << base);
    CHECK(static_cast<double>(hic) / imp > base);
}
