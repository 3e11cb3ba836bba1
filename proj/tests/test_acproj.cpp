#include <doctest.h>

#include "dsagen/acproj.hpp"
#include "dsagen/error.hpp"
#include "fixtures.hpp"

#include <cstring>
#include <random>

using namespace dsagen;
using namespace dsagen::acproj;
using netmodel::NetworkModel;
using netmodel::OperatingPoint;

namespace {

bool verified_feasible(const NetworkModel& m, const OperatingPoint& x) {
    const auto st = powerflow::solve_pf(m, x, false);
    return st.converged && powerflow::check_feasibility(m, st).feasible;
}

}  // namespace

TEST_CASE("constraint excess agrees with the feasibility report") {
    const NetworkModel m = fixtures::case9();
    const auto box = relaxation::initial_bounds(m, 0.1).box;
    std::mt19937_64 rng(2);
    int checked = 0;
    for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd x(box.lower.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x[i] = std::uniform_real_distribution<double>(box.lower[i], box.upper[i])(rng);
        }
        const auto st = powerflow::solve_pf(m, {x}, false);
        if (!st.converged) continue;
        ++checked;
        const bool feasible = powerflow::check_feasibility(m, st).feasible;
        CHECK(feasible == (constraint_excess(m, st).maxCoeff() <= 1e-6));
    }
    CHECK(checked > 150);
}

TEST_CASE("feasible points project onto themselves") {
    const NetworkModel m = fixtures::case9();
    const auto b = relaxation::initial_bounds(m, 0.1);
    for (const auto& p : fixtures::ac_feasible_points(m, b.box, 10, 5)) {
        const ProjectionResult r = project_to_ac(m, b, {p.x});
        REQUIRE(r.status == Status::LocalOptimal);
        CHECK(r.R <= 1e-6);
        CHECK((r.x_star.x - p.x).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
}

TEST_CASE("projections re-verify and beat every known feasible point") {
    const NetworkModel m = fixtures::case9();
    const auto b = relaxation::initial_bounds(m, 0.1);
    const auto& lay = m.layout();
    std::mt19937_64 rng(13);
    int projected = 0;
    for (int trial = 0; trial < 40 && projected < 10; ++trial) {
        Eigen::VectorXd x(b.box.lower.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x[i] = std::uniform_real_distribution<double>(b.box.lower[i], b.box.upper[i])(rng);
        }
        if (verified_feasible(m, {x})) continue;
        const ProjectionResult r = project_to_ac(m, b, {x});
        if (r.status != Status::LocalOptimal) continue;
        ++projected;
        CHECK(r.R > 0.0);
        CHECK(verified_feasible(m, r.x_star));
        // Loads are untouched.
        CHECK(r.x_star.x.tail(x.size() - lay.pd_offset()) == x.tail(x.size() - lay.pd_offset()));
        // No feasible dispatch for the same loads is closer.
        netmodel::Box same_loads = b.box;
        same_loads.lower.tail(x.size() - lay.pd_offset()) = x.tail(x.size() - lay.pd_offset());
        same_loads.upper.tail(x.size() - lay.pd_offset()) = x.tail(x.size() - lay.pd_offset());
        for (const auto& ref : fixtures::ac_feasible_points(m, same_loads, 20, 100 + trial, 5000)) {
            CHECK(r.R <= (ref.x - x).norm() + 1e-6);
        }
        // The relaxation is an outer approximation.
        CHECK(r.R >= relaxation::closest_qc_projection(m, b, {x}).R - 1e-6);
    }
    CHECK(projected >= 8);
}

TEST_CASE("slight reactive violation is repaired with a short move") {
    const NetworkModel base = fixtures::case9();
    const auto b = relaxation::initial_bounds(base, 0.1);
    const auto& lay = base.layout();
    int cases = 0;
    for (const auto& p : fixtures::ac_feasible_points(base, b.box, 6, 17)) {
        // Pull generator 2's reactive ceiling 2 MVAr below its output.
        auto gens = base.generators();
        const double q = p.state.sg[1].imag() * base.base_mva();
        if (q > 0) gens[1].q_max = q - 2.0;
        else gens[1].q_min = q + 2.0;
        const NetworkModel m(base.base_mva(), base.buses(), gens, base.lines(), base.loads());
        const auto rep = powerflow::check_feasibility(m, p.state);
        REQUIRE(rep.violations.size() == 1);
        CHECK(rep.violations[0].element == "gen 2 Q");

        const ProjectionResult r = project_to_ac(m, b, {p.x});
        REQUIRE(r.status == Status::LocalOptimal);
        CHECK(r.R > 0.0);
        CHECK(verified_feasible(m, r.x_star));
        netmodel::Box same_loads = b.box;
        const int nl = static_cast<int>(p.x.size()) - lay.pd_offset();
        same_loads.lower.tail(nl) = p.x.tail(nl);
        same_loads.upper.tail(nl) = p.x.tail(nl);
        const auto refs = fixtures::ac_feasible_points(m, same_loads, 30, 50 + cases, 20000);
        CHECK(refs.size() > 0);
        for (const auto& ref : refs) CHECK(r.R <= (ref.x - p.x).norm() + 1e-6);
        ++cases;
    }
    CHECK(cases == 6);
}

TEST_CASE("hopeless demand never yields an infeasible optimum") {
    const NetworkModel m = fixtures::case9();
    const auto b = relaxation::initial_bounds(m, 15.0);
    Eigen::VectorXd x = netmodel::nominal_point(m).x;
    x.segment(m.layout().pd_offset(), 3) *= 10.0;
    const ProjectionResult r = project_to_ac(m, b, {x});
    if (r.status == Status::LocalOptimal) {
        CHECK(verified_feasible(m, r.x_star));
    } else {
        CHECK_FALSE(r.message.empty());
    }
}

TEST_CASE("projection is deterministic") {
    const NetworkModel m = fixtures::case9();
    const auto b = relaxation::initial_bounds(m, 0.1);
    Eigen::VectorXd x = b.box.upper;
    x.head(m.layout().n_pg()) = b.box.lower.head(m.layout().n_pg());
    const ProjectionResult a = project_to_ac(m, b, {x});
    const ProjectionResult c = project_to_ac(m, b, {x});
    REQUIRE(a.x_star.x.size() == c.x_star.x.size());
    CHECK(a.status == c.status);
    if (a.x_star.x.size() > 0) {
        CHECK(std::memcmp(a.x_star.x.data(), c.x_star.x.data(), sizeof(double) * a.x_star.x.size()) == 0);
    }
}

TEST_CASE("relaxed cost never exceeds the AC cost") {
    SUBCASE("two-bus") {
        const NetworkModel m = fixtures::case2();
        const auto b = relaxation::initial_bounds(m, 0.0);
        const ProjectionResult ac = minimize_cost(m, b, netmodel::nominal_point(m));
        REQUIRE(ac.status == Status::LocalOptimal);
        const auto qc = relaxation::solve_qc(m, b);
        REQUIRE(qc.status == relaxation::QcStatus::Optimal);
        CHECK(qc.objective <= ac.objective * (1.0 + 1e-6));
        CHECK(ac.objective - qc.objective >= -1e-6 * ac.objective);
    }
    SUBCASE("nine-bus") {
        const NetworkModel m = fixtures::case9();
        const auto b = relaxation::initial_bounds(m, 0.0);
        const ProjectionResult ac = minimize_cost(m, b, netmodel::nominal_point(m));
        REQUIRE(ac.status == Status::LocalOptimal);
        const auto qc = relaxation::solve_qc(m, b);
        REQUIRE(qc.status == relaxation::QcStatus::Optimal);
        CHECK(qc.objective <= ac.objective * (1.0 + 1e-6));
        CHECK(qc.objective >= 0.99 * ac.objective);
    }
}

TEST_CASE("rejects points outside the box") {
    const NetworkModel m = fixtures::case9();
    const auto b = relaxation::initial_bounds(m, 0.1);
    Eigen::VectorXd x = b.box.upper;
    x[0] += 0.5;
    CHECK_THROWS_AS(project_to_ac(m, b, {x}), Error);
}
