#pragma once

#include "dsagen/netmodel.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

namespace dsagen::powerflow {

using netmodel::Complex;
using netmodel::NetworkModel;
using netmodel::OperatingPoint;

struct Tolerances {
    double pf_tol = 1e-8;    ///< nodal mismatch, p.u., infinity norm
    double feas_tol = 1e-6;  ///< constraint slack, p.u. (rad for angles)
    int max_iter = 50;
    int max_switch_rounds = 10;
};

struct SolvedState {
    Eigen::VectorXd vm;      ///< per bus, p.u.
    Eigen::VectorXd va;      ///< per bus, rad
    Eigen::VectorXcd sg;     ///< per generator, p.u.
    Eigen::VectorXcd s_from; ///< per line, injected at the from end, p.u.
    Eigen::VectorXcd s_to;
    bool converged = false;
    int iterations = 0;
    double mismatch = std::numeric_limits<double>::infinity();
    std::vector<char> q_limited;  ///< generators held at a reactive bound

    Eigen::VectorXcd voltage() const;
};

/// Newton-Raphson in polar coordinates. Divergence is reported through
/// `converged`, never thrown. With enforce_q_limits, generators that leave
/// their reactive range are pinned at the bound and their bus turns PQ.
SolvedState solve_pf(const NetworkModel& model, const OperatingPoint& op, bool enforce_q_limits,
                     const Tolerances& tol = {}, const SolvedState* warm_start = nullptr);

enum class ConstraintKind { VoltageMagnitude, GeneratorPower, LineFlow, AngleDifference };

std::string to_string(ConstraintKind kind);

struct Violation {
    ConstraintKind kind;
    std::string element;  ///< e.g. "bus 5", "gen 1 P", "line 4-5 from"
    double magnitude;     ///< amount beyond the bound (p.u., MVA-free)
};

struct FeasibilityReport {
    bool feasible = true;
    std::vector<Violation> violations;
};

FeasibilityReport check_feasibility(const NetworkModel& model, const SolvedState& state, const Tolerances& tol = {});

/// Operating point whose VG block is replaced by the solved generator-bus voltages.
OperatingPoint realized_setpoints(const NetworkModel& model, const OperatingPoint& op, const SolvedState& state);

/// Total series losses plus shunt consumption, p.u.
Complex network_losses(const NetworkModel& model, const SolvedState& state);

}  // namespace dsagen::powerflow
