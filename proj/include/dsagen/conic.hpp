#pragma once

// Primal-dual interior-point solver for linear and second-order cone programs
//
//   minimize    c'x
//   subject to  A x = b
//               G x + s = h,   s in R+^l x Q^{q_1} x ... x Q^{q_k}
//
// Q^q = {(u0, u1) in R x R^{q-1} : u0 >= ||u1||}. The method is a homogeneous
// self-dual embedding with Nesterov-Todd scaling and Mehrotra
// predictor-corrector steps; the reduced KKT system is factored with a sparse
// LDL' decomposition under static regularization plus iterative refinement.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace dsagen::conic {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct ConeDims {
    int l = 0;             ///< nonnegative orthant rows, listed first in G
    std::vector<int> soc;  ///< sizes of second-order cones, in row order
    int rows() const;
    int degree() const { return l + static_cast<int>(soc.size()); }
};

struct Problem {
    Eigen::VectorXd c;
    SpMat A;  ///< p x n, may have zero rows
    Eigen::VectorXd b;
    SpMat G;  ///< m x n
    Eigen::VectorXd h;
    ConeDims cones;
};

struct Settings {
    double feastol = 1e-8;
    double abstol = 1e-8;
    double reltol = 1e-8;
    double inaccurate_tol = 1e-6;  ///< accepted when the method stalls
    int max_iter = 100;
    double step_fraction = 0.99;
    double static_reg = 1e-8;
    int refine_steps = 10;
    int equilibration_passes = 3;
    bool verbose = false;  ///< per-iteration log on stderr
};

enum class Status { Optimal, Inaccurate, PrimalInfeasible, DualInfeasible, MaxIterations, NumericalFailure };

std::string to_string(Status status);

struct Result {
    Status status = Status::NumericalFailure;
    Eigen::VectorXd x, y, z, s;
    double primal_objective = std::numeric_limits<double>::quiet_NaN();
    double dual_objective = std::numeric_limits<double>::quiet_NaN();
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    double gap = std::numeric_limits<double>::infinity();
    int iterations = 0;

    /// Optimal or accepted at the reduced tolerance.
    bool solved() const { return status == Status::Optimal || status == Status::Inaccurate; }
};

Result solve(const Problem& problem, const Settings& settings = {});

// ---------------------------------------------------------------------------
// Modeling layer

struct Var {
    int index = -1;
};

class LinExpr {
public:
    LinExpr() = default;
    LinExpr(double constant) : constant_(constant) {}  // NOLINT(google-explicit-constructor)
    LinExpr(Var v) { terms_.emplace_back(v.index, 1.0); }  // NOLINT(google-explicit-constructor)

    LinExpr& operator+=(const LinExpr& o);
    LinExpr& operator-=(const LinExpr& o);
    LinExpr& operator*=(double k);

    const std::vector<std::pair<int, double>>& terms() const { return terms_; }
    double constant() const { return constant_; }
    double value(const Eigen::VectorXd& x) const;

private:
    std::vector<std::pair<int, double>> terms_;
    double constant_ = 0.0;
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a);
LinExpr operator*(double k, LinExpr a);
LinExpr operator*(LinExpr a, double k);

struct ModelSolution {
    Status status = Status::NumericalFailure;
    Eigen::VectorXd x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;

    bool solved() const { return status == Status::Optimal || status == Status::Inaccurate; }
    double operator[](Var v) const { return x[v.index]; }
    double value(const LinExpr& e) const { return e.value(x); }
};

/// Incremental builder for cone programs over named scalar variables.
class Model {
public:
    Var add_var(double lb = -std::numeric_limits<double>::infinity(),
                double ub = std::numeric_limits<double>::infinity());
    int n_vars() const { return static_cast<int>(lb_.size()); }
    void set_bounds(Var v, double lb, double ub);
    double lower(Var v) const { return lb_[v.index]; }
    double upper(Var v) const { return ub_[v.index]; }

    void add_eq(const LinExpr& e);  ///< e == 0
    void add_le(const LinExpr& e);  ///< e <= 0
    /// ||(e_1, ..., e_k)|| <= e_0
    void add_soc(const std::vector<LinExpr>& e);
    /// ||w||^2 <= u*v with u, v >= 0
    void add_rsoc(const LinExpr& u, const LinExpr& v, const std::vector<LinExpr>& w);

    void minimize(const LinExpr& objective) { objective_ = objective; }
    const LinExpr& objective() const { return objective_; }

    Problem build() const;
    ModelSolution solve(const Settings& settings = {}) const;

private:
    std::vector<double> lb_, ub_;
    std::vector<LinExpr> eqs_, les_;
    std::vector<std::vector<LinExpr>> socs_;
    LinExpr objective_;
};

}  // namespace dsagen::conic
