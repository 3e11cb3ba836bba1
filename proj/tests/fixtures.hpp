#pragma once

#include "dsagen/netmodel.hpp"
#include "dsagen/powerflow.hpp"

#include <random>
#include <string>
#include <vector>

namespace fixtures {

using dsagen::netmodel::NetworkModel;

inline NetworkModel case9() { return dsagen::netmodel::load_case_file(std::string(DSAGEN_DATA_DIR) + "/case9.m"); }

inline NetworkModel case2() { return dsagen::netmodel::load_case_file(std::string(DSAGEN_DATA_DIR) + "/case2.m"); }

/// Generation cost ($/h) of a solved state, all generators.
inline double generation_cost(const NetworkModel& m, const dsagen::powerflow::SolvedState& st) {
    double total = 0.0;
    for (int g = 0; g < m.n_gens(); ++g) {
        const auto& c = m.generators()[g].cost;
        const double p = st.sg[g].real() * m.base_mva();
        total += c.c2 * p * p + c.c1 * p + c.c0;
    }
    return total;
}

struct FeasiblePoint {
    Eigen::VectorXd x;
    dsagen::powerflow::SolvedState state;
};

/// Uniform draws from the box, kept when the flow converges and every
/// operating limit holds.
inline std::vector<FeasiblePoint> ac_feasible_points(const NetworkModel& m, const dsagen::netmodel::Box& box, int count,
                                                     std::uint64_t seed, int max_draws = 200000) {
    std::mt19937_64 rng(seed);
    std::vector<FeasiblePoint> out;
    for (int draw = 0; draw < max_draws && static_cast<int>(out.size()) < count; ++draw) {
        Eigen::VectorXd x(box.lower.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x[i] = std::uniform_real_distribution<double>(box.lower[i], box.upper[i])(rng);
        }
        auto st = dsagen::powerflow::solve_pf(m, {x}, false);
        if (!st.converged) continue;
        if (!dsagen::powerflow::check_feasibility(m, st).feasible) continue;
        out.push_back({x, std::move(st)});
    }
    return out;
}

}  // namespace fixtures
