#pragma once

#include "dsagen/netmodel.hpp"
#include "dsagen/powerflow.hpp"
#include "dsagen/relaxation.hpp"

#include <cstdint>
#include <string>

namespace dsagen::acproj {

using netmodel::NetworkModel;
using netmodel::OperatingPoint;

struct Options {
    double nlp_tol = 1e-6;    ///< step-norm stationarity and feasibility target
    int max_iter = 200;       ///< per start
    int restarts = 3;
    double margin = 1e-7;     ///< constraints are enforced this far inside their limits
    bool qc_warm_start = true;
    std::uint64_t seed = 0;   ///< perturbation of the last restart
};

enum class Status { LocalOptimal, Failed };
std::string to_string(Status s);

struct ProjectionResult {
    Status status = Status::Failed;
    OperatingPoint x_star;
    double R = 0.0;
    powerflow::SolvedState state;
    double objective = 0.0;
    double stationarity = 0.0;  ///< infinity norm of the last QP step
    int iterations = 0;
    int starts = 0;
    std::string message;
};

/// Closest AC-feasible operating point to x_hat. Loads stay at x_hat's values;
/// generator active-power and voltage setpoints move within the bounds' box.
ProjectionResult project_to_ac(const NetworkModel& model, const relaxation::TightenedBounds& bounds,
                               const OperatingPoint& x_hat, const Options& opt = {});

/// Cheapest AC-feasible dispatch for the loads of `loads` (local optimum).
/// Used to bracket the relaxation from above.
ProjectionResult minimize_cost(const NetworkModel& model, const relaxation::TightenedBounds& bounds,
                               const OperatingPoint& loads, const Options& opt = {});

/// Signed constraint excesses of a solved state (positive means violated):
/// bus voltages, generator P and Q, line flows at both ends, angle differences.
Eigen::VectorXd constraint_excess(const NetworkModel& model, const powerflow::SolvedState& state);

/// Generation cost in $/h of a solved state.
double generation_cost(const NetworkModel& model, const powerflow::SolvedState& state);

}  // namespace dsagen::acproj
