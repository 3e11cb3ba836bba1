#include <doctest.h>

#include "dsagen/dataset.hpp"
#include "dsagen/error.hpp"

#include <algorithm>
#include <random>
#include <sstream>

using namespace dsagen;
using namespace dsagen::dataset;

namespace {

RawResult raw(bool converged, bool feasible, std::optional<double> zeta) {
    RawResult r;
    r.x = Eigen::VectorXd::Constant(2, 0.5);
    r.converged = converged;
    r.feasible = feasible;
    r.zeta = zeta;
    return r;
}

Dataset synthetic(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<RawResult> rows;
    for (int i = 0; i < n; ++i) {
        RawResult r;
        r.x = Eigen::Vector3d(std::uniform_real_distribution<double>(0, 2)(rng), 1.0 / (i + 1), -0.25 * i);
        r.converged = rng() % 10 != 0;
        r.feasible = rng() % 2 == 0;
        if (r.converged && rng() % 7 != 0) r.zeta = std::uniform_real_distribution<double>(-0.02, 0.08)(rng);
        r.source = static_cast<Source>(rng() % 4);
        r.seed = rng();
        rows.push_back(r);
    }
    return make_dataset({"PG_2", "VG_1", "PD_5"}, rows, SecuritySpec{});
}

}  // namespace

TEST_CASE("labels from the security definition") {
    const SecuritySpec spec;
    const auto a = label(raw(true, true, 0.035), spec);
    CHECK(a.secure);
    CHECK_FALSE(a.in_hic);
    const auto b = label(raw(true, true, 0.031), spec);
    CHECK(b.secure);
    CHECK(b.in_hic);
    const auto c = label(raw(true, false, 0.031), spec);
    CHECK_FALSE(c.secure);
    CHECK(c.in_hic);
    // Secure uses >=, the band is strict.
    const auto d = label(raw(true, true, 0.03), spec);
    CHECK(d.secure);
    CHECK(label(raw(true, true, 0.0275), spec).in_hic == false);
    CHECK(label(raw(true, true, 0.0325), spec).in_hic == false);
    const auto e = label(raw(false, true, 0.031), spec);
    CHECK_FALSE(e.secure);
    CHECK_FALSE(e.in_hic);
    CHECK_FALSE(e.feasible);
    CHECK(label(raw(true, true, -0.01), spec).stable == false);
}

TEST_CASE("label implication chain") {
    const Dataset d = synthetic(500, 3);
    const SecuritySpec spec;
    for (const auto& r : d.rows) {
        if (r.secure) CHECK(r.stable);
        if (r.stable) CHECK(r.converged);
        if (!r.converged) {
            CHECK_FALSE(r.secure);
            CHECK_FALSE(r.in_hic);
        }
        CHECK(r.secure == (r.feasible && r.zeta && *r.zeta >= spec.gamma));
        CHECK(r.in_hic == (r.converged && r.zeta && spec.in_hic(*r.zeta)));
    }
}

TEST_CASE("balanced resampling") {
    const Dataset d = synthetic(600, 5);
    const Dataset b = rebalance(d, 100, RebalanceMode::BalancedSecure, 1);
    REQUIRE(b.rows.size() == 100);
    CHECK(stats(b).secure == 0.5);
    CHECK(std::is_sorted(b.rows.begin(), b.rows.end(), [](const auto& u, const auto& v) { return u.id < v.id; }));
    CHECK_THROWS_AS(rebalance(d, 601, RebalanceMode::Random, 1), Error);
    const int n_secure = static_cast<int>(stats(d).secure * 600 + 0.5);
    try {
        rebalance(d, 2 * n_secure + 2, RebalanceMode::BalancedSecure, 1);
        FAIL("expected class exhaustion");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InsufficientData);
        CHECK(std::string(e.what()).find("secure " + std::to_string(n_secure)) != std::string::npos);
    }
    // Same seed, same subset.
    const Dataset b2 = rebalance(d, 100, RebalanceMode::BalancedSecure, 1);
    for (std::size_t i = 0; i < b.rows.size(); ++i) CHECK(b.rows[i].id == b2.rows[i].id);
}

TEST_CASE("resampling to a given secure share") {
    const Dataset d = synthetic(600, 5);
    for (double share : {0.0, 0.2, 0.25, 0.5, 0.9}) {
        const Dataset r = resample_with_share(d, 40, share, 3);
        REQUIRE(r.rows.size() == 40);
        int secure = 0;
        for (const auto& row : r.rows) secure += row.secure;
        CHECK(secure == static_cast<int>(share * 40));
    }
    const Dataset a = resample_with_share(d, 100, 0.5, 1);
    const Dataset b = rebalance(d, 100, RebalanceMode::BalancedSecure, 1);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].id == b.rows[i].id);
    CHECK_THROWS_AS(resample_with_share(d, 10, 1.5, 1), Error);
}

TEST_CASE("random resampling preserves class shares on average") {
    const Dataset d = synthetic(400, 8);
    const double share = stats(d).secure;
    double mean = 0.0;
    const int reps = 400;
    for (int s = 0; s < reps; ++s) mean += stats(rebalance(d, 100, RebalanceMode::Random, s)).secure;
    mean /= reps;
    // Hypergeometric sd of one draw is below 0.05; of the mean below 0.0025.
    CHECK(std::abs(mean - share) < 0.01);
}

TEST_CASE("dataset statistics") {
    std::vector<RawResult> rows(10, raw(true, true, 0.2));
    const DatasetStats s = stats(make_dataset({"a", "b"}, rows, SecuritySpec{}));
    CHECK(s.feasible == 1.0);
    CHECK(s.stable == 1.0);
    CHECK(s.secure == 1.0);
    CHECK(s.hic == 0.0);
    CHECK_THROWS_AS(stats(Dataset{}), Error);

    Dataset d = synthetic(200, 4);
    const DatasetStats before = stats(d);
    std::mt19937_64 rng(1);
    std::shuffle(d.rows.begin(), d.rows.end(), rng);
    const DatasetStats after = stats(d);
    CHECK(before.feasible == after.feasible);
    CHECK(before.stable == after.stable);
    CHECK(before.secure == after.secure);
    CHECK(before.hic == after.hic);
    for (double v : {before.feasible, before.stable, before.secure, before.hic}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("CSV layout and round trip") {
    const Dataset d = synthetic(50, 6);
    std::ostringstream out;
    write_csv(d, out);
    const std::string text = out.str();
    const std::string header = text.substr(0, text.find('\n'));
    CHECK(header == "id,PG_2,VG_1,PD_5,converged,feasible,zeta,stable,secure,in_hic,source,seed");

    std::istringstream in(text);
    const Dataset back = read_csv(in);
    REQUIRE(back.rows.size() == d.rows.size());
    CHECK(back.names == d.names);
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        const auto& a = d.rows[i];
        const auto& b = back.rows[i];
        CHECK(a.id == b.id);
        CHECK((a.x - b.x).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, a.x.cwiseAbs().maxCoeff()));
        CHECK(a.zeta.has_value() == b.zeta.has_value());
        CHECK(a.converged == b.converged);
        CHECK(a.secure == b.secure);
        CHECK(a.in_hic == b.in_hic);
        CHECK(a.source == b.source);
        CHECK(a.seed == b.seed);
    }
    // A second write of the parsed file is byte-identical.
    std::ostringstream again;
    write_csv(back, again);
    CHECK(again.str() == text);
}

TEST_CASE("nine significant digits and blank zeta") {
    std::vector<RawResult> rows{raw(false, false, std::nullopt)};
    rows[0].x = Eigen::Vector2d(1.0 / 3.0, 1234.56789012);
    std::ostringstream out;
    write_csv(make_dataset({"a", "b"}, rows, SecuritySpec{}), out);
    CHECK(out.str().find("\n0,0.333333333,1234.56789,0,0,,0,0,0,dw,0\n") != std::string::npos);
}

TEST_CASE("malformed CSV is rejected") {
    for (const char* bad : {"", "x,a\n", "id,a,converged,feasible,zeta,stable,secure,in_hic,source,seed\n1,2\n",
                            "id,a,converged,feasible,zeta,stable,secure,in_hic,source,seed\n0,1,2,0,,0,0,0,dw,0\n",
                            "id,a,converged,feasible,zeta,stable,secure,in_hic,source,seed\n0,q,1,0,,0,0,0,dw,0\n",
                            "id,a,converged,feasible,zeta,stable,secure,in_hic,source,seed\n0,1,1,0,,0,0,0,zz,0\n"}) {
        std::istringstream in(bad);
        CHECK_THROWS_AS(read_csv(in), Error);
    }
}

TEST_CASE("source names") {
    for (Source s : {Source::DW, Source::LHC, Source::Importance, Source::Projection}) {
        CHECK(parse_source(to_string(s)) == s);
    }
}
