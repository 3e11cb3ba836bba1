#pragma once

// Small-signal model: two-axis synchronous machines with a gain/lag exciter
// and a droop/lag governor, constant-power loads, network on Y_bus.
//
// States per machine: delta, omega (p.u. speed), E'q, E'd, Efd, Pm.
// Algebraic variables: Id, Iq per machine, theta and V per bus.

#include "dsagen/netmodel.hpp"
#include "dsagen/powerflow.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dsagen::smallsignal {

using netmodel::NetworkModel;
using netmodel::OperatingPoint;
using powerflow::SolvedState;

/// All quantities on the system MVA base. An infinite time constant freezes
/// the corresponding state (classical machine, fixed field or fixed power).
struct MachineDynamics {
    double H = 0.0;   ///< s
    double D = 0.0;   ///< p.u. power per p.u. speed
    double xd = 0.0, xq = 0.0;
    double xd_p = 0.0, xq_p = 0.0;
    double Td0_p = 0.0, Tq0_p = 0.0;  ///< s
    double Ka = 0.0, Ta = 0.0;
    double Rg = 0.0, Tg = 0.0;
};

/// Checks the parameter invariants; throws invalid_error naming the field.
void validate(const MachineDynamics& m);

/// Per-generator dynamics, indexed like NetworkModel::generators(). A
/// generator without a record is an infinite bus: its terminal voltage
/// phasor stays at the power-flow value.
struct DynamicsData {
    double frequency_hz = 60.0;
    std::vector<std::optional<MachineDynamics>> machines;

    double omega_s() const;
    bool has_infinite_bus() const;
};

/// Sidecar JSON: {"frequency_hz": 60, "generators": {"<gen id>": {"H": ..., ...}}}.
DynamicsData parse_dynamics(const std::string& json_text, const NetworkModel& model);
DynamicsData load_dynamics(const std::string& path, const NetworkModel& model);

struct StateSpace {
    Eigen::MatrixXd A;
    std::vector<std::string> labels;
};

/// Linearizes around a converged power-flow state. Without an infinite bus
/// the angle of the first dynamic machine is eliminated (6G - 1 states).
StateSpace linearize(const NetworkModel& model, const DynamicsData& dyn, const SolvedState& state);

struct Mode {
    double sigma = 0.0;  ///< 1/s
    double omega = 0.0;  ///< rad/s, >= 0
    double zeta = 0.0;
};

/// Damping ratio -sigma/|lambda|.
double damping_ratio(double sigma, double omega);

constexpr double kZeroModeTol = 1e-8;

struct ModeSet {
    std::vector<Mode> modes;  ///< one entry per real eigenvalue or conjugate pair
    int zeta_min_mode = -1;   ///< least-damped mode with |lambda| >= kZeroModeTol, or -1
};

ModeSet eigenmodes(const Eigen::MatrixXd& A);

/// Smallest damping ratio over modes with |lambda| >= zero_mode_tol.
double min_damping(const ModeSet& modes, double zero_mode_tol = kZeroModeTol);

/// linearize + eigenmodes + min_damping.
double zeta_min(const NetworkModel& model, const DynamicsData& dyn, const SolvedState& state);

struct Sensitivity {
    double value = 0.0;  ///< d zeta_min / d rho, per p.u.
    int sides = 2;       ///< 1 when one perturbed power flow diverged
};

/// Finite-difference sensitivity of zeta_min to PG coordinate `coord`. The
/// slack generator absorbs the perturbation.
Sensitivity damping_sensitivity(const NetworkModel& model, const DynamicsData& dyn, const OperatingPoint& op,
                                int coord, double step = 1e-3);

}  // namespace dsagen::smallsignal
