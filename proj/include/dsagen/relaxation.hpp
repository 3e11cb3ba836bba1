#pragma once

#include "dsagen/conic.hpp"
#include "dsagen/netmodel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dsagen::relaxation {

using netmodel::NetworkModel;
using netmodel::OperatingPoint;

/// Variable boxes that parameterize the QC envelopes.
struct TightenedBounds {
    Eigen::VectorXd v_min, v_max;          ///< per bus, p.u.
    Eigen::VectorXd theta_min, theta_max;  ///< per line angle difference, rad
    netmodel::Box box;                     ///< input vector

    bool nested_in(const TightenedBounds& outer, double tol = 0.0) const;
};

/// Case limits with a +/- load_range band on every load.
TightenedBounds initial_bounds(const NetworkModel& model, double load_range);

enum class QcStatus { Optimal, Infeasible, NumericalFailure };
std::string to_string(QcStatus status);

struct RelaxedSolution {
    QcStatus status = QcStatus::NumericalFailure;
    OperatingPoint x;
    Eigen::VectorXd v, theta, w;   ///< per bus
    Eigen::VectorXd wr, wi, l;     ///< per line
    Eigen::VectorXcd s_from, s_to; ///< per line, p.u.
    Eigen::VectorXcd sg;           ///< per generator, p.u.
    double R = 0.0;
    double objective = 0.0;
};

/// Objective of a relaxation solve: generation cost ($/h) or a linear form w'x
/// over the input vector.
struct QcObjective {
    enum class Kind { Cost, Linear } kind = Kind::Cost;
    Eigen::VectorXd weights;

    static QcObjective cost() { return {}; }
    static QcObjective linear(Eigen::VectorXd w) { return {Kind::Linear, std::move(w)}; }
};

/// The QC relaxation as a cone program with handles on the quantities the
/// bound-tightening and projection steps need.
class QcFormulation {
public:
    QcFormulation(const NetworkModel& model, const TightenedBounds& bounds);

    conic::Model& model() { return cm_; }
    const conic::Model& model() const { return cm_; }
    const NetworkModel& network() const { return net_; }

    conic::LinExpr input(int k) const;   ///< coordinate k of x
    conic::Var v(int bus) const { return v_[bus]; }
    conic::Var w(int bus) const { return w_[bus]; }
    conic::Var theta(int bus) const { return th_[bus]; }
    conic::LinExpr angle_difference(int line) const;
    conic::LinExpr cost() const;

    RelaxedSolution extract(const conic::ModelSolution& sol) const;

private:
    const NetworkModel& net_;
    conic::Model cm_;
    std::vector<conic::Var> v_, w_, th_, pg_, qg_, pd_, qd_;
    std::vector<conic::Var> wr_, wi_, l_, pf_, qf_, pt_, qt_;
    std::vector<conic::Var> cost_epi_;
};

struct SolveOptions {
    double conic_tol = 1e-6;
    conic::Settings settings() const;
};

RelaxedSolution solve_qc(const NetworkModel& model, const TightenedBounds& bounds,
                         const QcObjective& objective = QcObjective::cost(), const SolveOptions& opt = {});

/// Tightens voltage, angle-difference and input-vector bounds by min/max solves
/// over the relaxation. Each pass works on the bounds of the previous pass.
TightenedBounds obbt(const NetworkModel& model, const TightenedBounds& bounds, int iterations,
                     const SolveOptions& opt = {});

/// Closest point of the relaxation to x_hat in Euclidean distance over x.
struct Projection {
    OperatingPoint x_star;
    double R = 0.0;
};
Projection closest_qc_projection(const NetworkModel& model, const TightenedBounds& bounds, const OperatingPoint& x_hat,
                                 const SolveOptions& opt = {});

/// Half-space certificate. Points with normal'(x - x_star) < 0 are AC-infeasible.
struct Hyperplane {
    Eigen::VectorXd normal;  ///< x_star - x_hat
    double offset = 0.0;     ///< normal' x_star

    bool excludes(const Eigen::VectorXd& x) const { return normal.dot(x) - offset < 0.0; }
};

/// Returns nothing when ||x_star - x_hat|| <= min_radius.
std::optional<Hyperplane> make_hyperplane(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_star,
                                          double min_radius = 1e-6);

/// Unclassified region {x : A x <= b}.
struct Polytope {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::vector<double> volume_history;  ///< relative to the initial box
    netmodel::Box box;

    static Polytope from_box(const netmodel::Box& box);
    int dimension() const { return static_cast<int>(A.cols()); }
    int rows() const { return static_cast<int>(A.rows()); }
    int n_hyperplanes() const { return rows() - 2 * dimension(); }
    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
    /// Appends the retained side normal'x >= offset - margin*||normal||.
    void add_cut(const Hyperplane& h, double margin = 0.0);
};

struct ChebyshevBall {
    Eigen::VectorXd center;
    double radius = 0.0;
};
/// Largest inscribed ball, computed in coordinates scaled to the unit box.
ChebyshevBall chebyshev_center(const Polytope& P);

struct HitAndRunOptions {
    int burn_in = 100;
    int thinning = 10;
};

/// Uniform samples via hit-and-run from the Chebyshev center. The walk runs in
/// coordinates normalized by the polytope's box.
std::vector<Eigen::VectorXd> hit_and_run(const Polytope& P, int n, std::uint64_t seed,
                                         const HitAndRunOptions& opt = {});

/// Share of samples retained by the cut.
double estimate_volume_ratio(const Polytope& P, const Hyperplane& cut, const std::vector<Eigen::VectorXd>& samples,
                             double margin = 0.0);

struct HyperplaneConfig {
    int N1 = 100;
    double tau = 0.05;
    int eta = 30;
    int volume_samples = 500;
    HitAndRunOptions hit_and_run;
    double min_radius = 1e-6;
    double cut_margin = 1e-6;  ///< certificate slack, in distance units
    double max_failure_share = 0.2;
    std::uint64_t seed = 1;
    SolveOptions solve;
};

enum class StopReason { IterationLimit, VolumeStalled };
std::string to_string(StopReason r);

struct HyperplaneRun {
    Polytope polytope;
    StopReason stop = StopReason::IterationLimit;
    int iterations = 0;
    int stop_iteration = -1;  ///< iteration at which the stall rule fired
    int failures = 0;
    int degenerate_cuts = 0;
};

/// Sequential cutting loop with the volume-stall stopping rule. Iterations that
/// add no cut leave the volume unchanged and count toward the stall streak.
/// The projection is pluggable for testing.
using Projector = std::function<std::optional<Projection>(const OperatingPoint&)>;

HyperplaneRun separating_hyperplanes(const NetworkModel& model, const TightenedBounds& bounds,
                                     const HyperplaneConfig& config);
HyperplaneRun separating_hyperplanes(const Polytope& start, const Projector& project, const HyperplaneConfig& config);

/// Persistence: <stem>_A.csv, <stem>_b.csv and <stem>.json.
void save_polytope(const Polytope& P, const std::string& stem, std::uint64_t layout_hash,
                   const std::vector<std::string>& names);
Polytope load_polytope(const std::string& stem, std::uint64_t expected_layout_hash);

}  // namespace dsagen::relaxation
