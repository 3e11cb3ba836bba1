#pragma once

// Boundary-dense sampling: initialization points from the polytope, directed
// walks on the damping ratio, HIC neighborhood scans and the final
// feasibility pass.

#include "dsagen/acproj.hpp"
#include "dsagen/dataset.hpp"
#include "dsagen/netmodel.hpp"
#include "dsagen/powerflow.hpp"
#include "dsagen/relaxation.hpp"
#include "dsagen/smallsignal.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dsagen::walker {

using dataset::SecuritySpec;
using netmodel::NetworkModel;
using netmodel::OperatingPoint;

/// Everything needed to evaluate an operating point.
struct Context {
    const NetworkModel& model;
    const smallsignal::DynamicsData& dynamics;
    const relaxation::TightenedBounds& bounds;
    acproj::Options projection{};
    powerflow::Tolerances pf{};
};

struct Evaluation {
    OperatingPoint op;
    bool converged = false;
    bool feasible = false;
    std::optional<double> zeta;  ///< undefined when the flow diverged or the DAE is singular
};

/// Power flow without reactive limits, feasibility check, least damping.
Evaluation evaluate(const Context& ctx, const OperatingPoint& op);

dataset::RawResult to_raw(const Evaluation& e, dataset::Source source, std::uint64_t seed);

/// A sample and, when it is infeasible, its feasible counterpart.
struct Paired {
    Evaluation sample;
    std::optional<Evaluation> counterpart;
    bool dropped = false;  ///< infeasible and no counterpart was found
};

/// Infeasible samples are first retried with reactive limits enforced (when
/// try_q_limits), then projected onto the AC-feasible set.
Paired pair_with_feasible(const Context& ctx, const OperatingPoint& op, bool try_q_limits, std::uint64_t seed);

struct InitResult {
    std::vector<Evaluation> feasible;
    std::vector<Evaluation> infeasible;
    std::vector<int> pair_of_infeasible;  ///< index into `feasible`
    std::vector<std::uint64_t> feasible_seed;
    int dropped = 0;
};

/// Draws n2 hit-and-run samples from the polytope and sorts them into the
/// feasible and infeasible sets. A sample without a feasible counterpart is
/// dropped from both.
InitResult init_points(const Context& ctx, const relaxation::Polytope& polytope, int n2, std::uint64_t seed,
                       int workers = 1);

struct DWConfig {
    std::array<double, 4> epsilons{0.04, 0.03, 0.02, 0.01};  ///< fractions of P^max
    std::array<double, 3> distances{0.010, 0.005, 0.0025};   ///< damping-ratio units
    int kappa_max = 30;
    int kappa_hic = 15;
    double discretization_mw = 1.0;
    double sensitivity_step = 1e-3;  ///< p.u.

    void validate() const;
};

/// |zeta - gamma|.
double distance(double zeta, const SecuritySpec& spec);

/// Step in MW for a generator of capacity p_max_mw at distance d.
double step_size(double d, double p_max_mw, const DWConfig& cfg);

enum class StepStatus { Moved, FlatGradient, Diverged };

struct StepResult {
    StepStatus status = StepStatus::Moved;
    OperatingPoint next;
    Eigen::VectorXd gradient;  ///< d(distance)/d(PG), per p.u.
};

/// One steepest-descent step of the distance over the PG coordinates, clipped
/// to the PG range of the context box.
StepResult dw_step(const Context& ctx, const Evaluation& current, const SecuritySpec& spec, const DWConfig& cfg);

enum class Termination { EnteredHic, StepBudget, PfDivergence, FlatGradient };
std::string to_string(Termination t);
Termination parse_termination(const std::string& s);

struct TraceEntry {
    OperatingPoint op;
    double zeta = 0.0;
    double d = 0.0;
};

struct WalkTrace {
    std::vector<TraceEntry> steps;    ///< walk points before the HIC scan
    std::vector<TraceEntry> hic;      ///< stored HIC points, on the MW grid
    Termination reason = Termination::StepBudget;
};

/// PG values rounded to the MW grid and kept inside the box.
OperatingPoint snap(const NetworkModel& model, const netmodel::Box& box, const OperatingPoint& op,
                    double discretization_mw);

WalkTrace directed_walk(const Context& ctx, const Evaluation& start, const SecuritySpec& spec, const DWConfig& cfg);

struct FinalizeResult {
    std::vector<dataset::RawResult> rows;  ///< samples and their projections, in input order
    int dropped = 0;
};

/// Re-checks every HIC point. Infeasible points are kept and paired with
/// their projection, whose damping is recomputed; points whose projection
/// fails are dropped.
FinalizeResult finalize(const Context& ctx, const std::vector<std::pair<Eigen::VectorXd, std::uint64_t>>& points,
                        int workers = 1);

struct GenerateConfig {
    SecuritySpec spec;
    DWConfig dw;
    int n2 = 200;
    std::uint64_t seed = 1;
    int workers = 1;
};

/// Optional per-walk persistence used for resuming interrupted runs.
struct WalkCheckpoint {
    std::function<std::optional<WalkTrace>(int)> load;
    std::function<void(int, const WalkTrace&)> save;
};

struct GenerateResult {
    dataset::Dataset data;
    int init_feasible = 0;
    int init_infeasible = 0;
    int init_dropped = 0;
    int walks = 0;
    int walks_resumed = 0;
    std::array<int, 4> terminations{};  ///< indexed by Termination
    int hic_points = 0;
    int final_dropped = 0;
};

/// Full pipeline: init_points, one walk per feasible initialization point,
/// de-duplication, finalize, labeling.
GenerateResult generate(const Context& ctx, const relaxation::Polytope& polytope, const GenerateConfig& cfg,
                        const WalkCheckpoint* checkpoint = nullptr);

struct AuditResult {
    int checked = 0;
    int mismatches = 0;
    std::vector<std::int64_t> mismatched_ids;
};

/// Re-evaluates up to n random rows from their stored x and compares flags.
AuditResult audit(const Context& ctx, const dataset::Dataset& d, const SecuritySpec& spec, int n, std::uint64_t seed);

}  // namespace dsagen::walker
