#include "dsagen/acproj.hpp"

#include "dsagen/conic.hpp"
#include "dsagen/error.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <random>

namespace dsagen::acproj {

namespace {

using Eigen::VectorXd;
using powerflow::SolvedState;

constexpr double kFdStep = 1e-5;
constexpr double kMaxRadius = 1.0;

powerflow::Tolerances inner_tolerances() {
    powerflow::Tolerances t;
    t.pf_tol = 1e-11;
    return t;
}

// Generator setpoints are the leading block [PG; VG] of the input vector.
struct Problem {
    const NetworkModel& model;
    VectorXd base;  // full input vector, loads fixed
    VectorXd lo, hi;
    // Objective on the control vector and its quadratic model.
    std::function<double(const VectorXd&, const SolvedState&)> f;
    std::function<VectorXd(const VectorXd&)> exact_gradient;  // empty for finite differences
    VectorXd hessian_diag;

    int n() const { return static_cast<int>(lo.size()); }

    OperatingPoint point(const VectorXd& u) const {
        OperatingPoint op{base};
        op.x.head(n()) = u;
        return op;
    }
    std::optional<SolvedState> flow(const VectorXd& u, const SolvedState* warm) const {
        SolvedState st = powerflow::solve_pf(model, point(u), false, inner_tolerances(), warm);
        if (!st.converged) return std::nullopt;
        return st;
    }
};

struct Linearization {
    VectorXd g;   // constraint excess
    Eigen::MatrixXd J;
    VectorXd grad;
    bool ok = false;
};

Linearization linearize(const Problem& P, const VectorXd& u, const SolvedState& st) {
    Linearization L;
    L.g = constraint_excess(P.model, st);
    L.J.resize(L.g.size(), P.n());
    L.grad.resize(P.n());
    for (int j = 0; j < P.n(); ++j) {
        // Central difference; fall back to one side at the box.
        const double h = kFdStep;
        VectorXd up = u, dn = u;
        up[j] += h;
        dn[j] -= h;
        auto sp = P.flow(up, &st);
        auto sm = P.flow(dn, &st);
        if (sp && sm) {
            L.J.col(j) = (constraint_excess(P.model, *sp) - constraint_excess(P.model, *sm)) / (2 * h);
            if (!P.exact_gradient) L.grad[j] = (P.f(up, *sp) - P.f(dn, *sm)) / (2 * h);
        } else if (sp) {
            L.J.col(j) = (constraint_excess(P.model, *sp) - L.g) / h;
            if (!P.exact_gradient) L.grad[j] = (P.f(up, *sp) - P.f(u, st)) / h;
        } else if (sm) {
            L.J.col(j) = (L.g - constraint_excess(P.model, *sm)) / h;
            if (!P.exact_gradient) L.grad[j] = (P.f(u, st) - P.f(dn, *sm)) / h;
        } else {
            return L;
        }
    }
    if (P.exact_gradient) L.grad = P.exact_gradient(u);
    L.ok = true;
    return L;
}

struct Step {
    VectorXd d;
    double predicted = 0.0;
    bool ok = false;
};

double violation(const VectorXd& g) { return g.cwiseMax(0.0).sum(); }

// l1-penalty QP: min grad'd + d'Bd/2 + mu*sum(max(0, g + J d)) over the box and
// the infinity-norm trust region.
Step solve_subproblem(const Problem& P, const VectorXd& u, const Linearization& L, double mu, double radius) {
    using conic::LinExpr;
    conic::Model M;
    std::vector<conic::Var> d;
    for (int j = 0; j < P.n(); ++j) {
        const double lo = std::max(-radius, P.lo[j] - u[j]);
        const double hi = std::min(radius, P.hi[j] - u[j]);
        d.push_back(M.add_var(std::min(lo, 0.0), std::max(hi, 0.0)));
    }
    LinExpr obj;
    for (int j = 0; j < P.n(); ++j) obj += L.grad[j] * LinExpr(d[j]);
    const conic::Var q = M.add_var(0.0);
    std::vector<LinExpr> w;
    for (int j = 0; j < P.n(); ++j) {
        if (P.hessian_diag[j] > 0.0) w.push_back(std::sqrt(0.5 * P.hessian_diag[j]) * LinExpr(d[j]));
    }
    if (!w.empty()) {
        M.add_rsoc(q, 1.0, w);
        obj += q;
    }
    for (int i = 0; i < L.g.size(); ++i) {
        const conic::Var t = M.add_var(0.0);
        LinExpr row = L.g[i] - LinExpr(t);
        for (int j = 0; j < P.n(); ++j) {
            if (L.J(i, j) != 0.0) row += L.J(i, j) * LinExpr(d[j]);
        }
        M.add_le(row);
        obj += mu * LinExpr(t);
    }
    M.minimize(obj);
    const conic::ModelSolution s = M.solve();
    Step out;
    if (!s.solved()) return out;
    out.d.resize(P.n());
    for (int j = 0; j < P.n(); ++j) out.d[j] = std::clamp(s[d[j]], P.lo[j] - u[j], P.hi[j] - u[j]);
    const VectorXd lin = L.g + L.J * out.d;
    const double model_after =
        L.grad.dot(out.d) + 0.5 * out.d.dot(P.hessian_diag.cwiseProduct(out.d)) + mu * violation(lin);
    out.predicted = mu * violation(L.g) - model_after;
    out.ok = true;
    return out;
}

struct Outcome {
    bool converged = false;
    VectorXd u;
    SolvedState state;
    double stationarity = 0.0;
    int iterations = 0;
};

Outcome run_sqp(const Problem& P, VectorXd u, const Options& opt) {
    Outcome out;
    auto st0 = P.flow(u, nullptr);
    if (!st0) return out;
    SolvedState st = std::move(*st0);
    double radius = 0.1;
    auto excess = [&](const SolvedState& s) { return (constraint_excess(P.model, s).array() + opt.margin).matrix(); };

    for (int it = 0; it < opt.max_iter; ++it) {
        out.iterations = it + 1;
        Linearization L = linearize(P, u, st);
        if (!L.ok) break;
        L.g.array() += opt.margin;
        const double mu = 1e3 * (1.0 + L.grad.lpNorm<Eigen::Infinity>());
        const Step s = solve_subproblem(P, u, L, mu, radius);
        if (!s.ok) break;
        const double step = s.d.lpNorm<Eigen::Infinity>();
        const double viol = violation(L.g);
        out.stationarity = step;
        if (step <= opt.nlp_tol && viol <= opt.nlp_tol * 1e-3) {
            out.converged = true;
            break;
        }
        if (s.predicted <= 1e-14 * (1.0 + std::abs(P.f(u, st)))) {
            out.converged = viol <= opt.nlp_tol * 1e-3;
            break;
        }
        const VectorXd trial = u + s.d;
        auto ts = P.flow(trial, &st);
        if (!ts) {
            radius = 0.25 * std::min(radius, step);
            if (radius < 1e-12) break;
            continue;
        }
        const double phi = P.f(u, st) + mu * viol;
        const double phi_t = P.f(trial, *ts) + mu * violation(excess(*ts));
        const double rho = (phi - phi_t) / s.predicted;
        if (rho >= 0.1) {
            u = trial;
            st = std::move(*ts);
            if (rho > 0.75 && step >= 0.9 * radius) radius = std::min(2.0 * radius, kMaxRadius);
        }
        if (rho < 0.25) radius = 0.25 * std::min(radius, step);
        if (radius < 1e-12) break;
    }
    out.u = u;
    out.state = std::move(st);
    return out;
}

// Starts are tried in order; the first one that converges to a verified
// feasible point wins.
ProjectionResult run(const Problem& P, const std::vector<VectorXd>& starts, const OperatingPoint& reference,
                     const Options& opt) {
    ProjectionResult r;
    for (const VectorXd& u0 : starts) {
        ++r.starts;
        Outcome o = run_sqp(P, u0, opt);
        r.iterations += o.iterations;
        if (!o.converged || !powerflow::check_feasibility(P.model, o.state).feasible) continue;
        r.status = Status::LocalOptimal;
        r.x_star = P.point(o.u);
        r.R = (r.x_star.x - reference.x).norm();
        r.objective = P.f(o.u, o.state);
        r.stationarity = o.stationarity;
        r.state = std::move(o.state);
        return r;
    }
    r.message = "no start reached a feasible local optimum";
    return r;
}

std::vector<VectorXd> default_starts(const Problem& P, const relaxation::TightenedBounds& bounds,
                                     const OperatingPoint& x_hat, const Options& opt) {
    const int n = P.n();
    std::vector<VectorXd> starts;
    if (opt.qc_warm_start) {
        try {
            const auto qc = relaxation::closest_qc_projection(P.model, bounds, x_hat);
            starts.push_back(qc.x_star.x.head(n).cwiseMax(P.lo).cwiseMin(P.hi));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numerical && e.kind() != ErrorKind::Invalid) throw;
        }
    }
    starts.push_back(x_hat.x.head(n));
    // Perturbed copy of the first start.
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> U(-0.01, 0.01);
    VectorXd p = starts.front();
    for (int j = 0; j < n; ++j) p[j] += U(rng) * (P.hi[j] - P.lo[j]);
    starts.push_back(p.cwiseMax(P.lo).cwiseMin(P.hi));
    if (static_cast<int>(starts.size()) > opt.restarts) starts.resize(std::max(1, opt.restarts));
    return starts;
}

void check_input(const NetworkModel& model, const relaxation::TightenedBounds& bounds, const OperatingPoint& x) {
    if (x.x.size() != model.layout().dimension()) throw invalid_error("operating point does not match the network");
    if (bounds.box.lower.size() != x.x.size()) throw invalid_error("bounds do not match the network");
}

}  // namespace

std::string to_string(Status s) { return s == Status::LocalOptimal ? "local-optimal" : "failed"; }

Eigen::VectorXd constraint_excess(const NetworkModel& model, const SolvedState& state) {
    const int nb = model.n_buses(), ng = model.n_gens(), nl = model.n_lines();
    const double base = model.base_mva();
    VectorXd g(2 * nb + 4 * ng + 4 * nl);
    int k = 0;
    for (int b = 0; b < nb; ++b) {
        g[k++] = state.vm[b] - model.buses()[b].v_max;
        g[k++] = model.buses()[b].v_min - state.vm[b];
    }
    for (int i = 0; i < ng; ++i) {
        const auto& gen = model.generators()[i];
        g[k++] = state.sg[i].real() - gen.p_max / base;
        g[k++] = gen.p_min / base - state.sg[i].real();
        g[k++] = state.sg[i].imag() - gen.q_max / base;
        g[k++] = gen.q_min / base - state.sg[i].imag();
    }
    for (int i = 0; i < nl; ++i) {
        const auto& line = model.lines()[i];
        const double smax = line.s_max / base;
        g[k++] = std::isfinite(smax) ? std::abs(state.s_from[i]) - smax : -1.0;
        g[k++] = std::isfinite(smax) ? std::abs(state.s_to[i]) - smax : -1.0;
        const double d = state.va[model.bus_index(line.from_bus)] - state.va[model.bus_index(line.to_bus)];
        g[k++] = d - line.theta_max;
        g[k++] = line.theta_min - d;
    }
    return g;
}

double generation_cost(const NetworkModel& model, const SolvedState& state) {
    double total = 0.0;
    for (int g = 0; g < model.n_gens(); ++g) {
        const auto& c = model.generators()[g].cost;
        const double p = state.sg[g].real() * model.base_mva();
        total += c.c2 * p * p + c.c1 * p + c.c0;
    }
    return total;
}

ProjectionResult project_to_ac(const NetworkModel& model, const relaxation::TightenedBounds& bounds,
                               const OperatingPoint& x_hat, const Options& opt) {
    check_input(model, bounds, x_hat);
    if (!bounds.box.contains(x_hat.x, 1e-9)) throw invalid_error("point to project lies outside the box bounds");
    const int n = model.layout().pd_offset();
    const VectorXd target = x_hat.x.head(n);
    Problem P{model, x_hat.x, bounds.box.lower.head(n), bounds.box.upper.head(n),
              [target](const VectorXd& u, const SolvedState&) { return (u - target).squaredNorm(); },
              [target](const VectorXd& u) { return VectorXd(2.0 * (u - target)); },
              VectorXd::Constant(n, 2.0)};
    return run(P, default_starts(P, bounds, x_hat, opt), x_hat, opt);
}

ProjectionResult minimize_cost(const NetworkModel& model, const relaxation::TightenedBounds& bounds,
                               const OperatingPoint& loads, const Options& opt) {
    check_input(model, bounds, loads);
    const int n = model.layout().pd_offset();
    const auto& lay = model.layout();
    VectorXd hess = VectorXd::Zero(n);
    const double base = model.base_mva();
    for (int k = 0; k < lay.n_pg(); ++k) hess[k] = 2.0 * model.generators()[lay.pg_generator(k)].cost.c2 * base * base;
    // Voltage coordinates get a small curvature so the subproblem stays well posed.
    for (int k = lay.n_pg(); k < n; ++k) hess[k] = 1e-3 * (1.0 + hess.head(lay.n_pg()).sum());
    Problem P{model, loads.x, bounds.box.lower.head(n), bounds.box.upper.head(n),
              [&model](const VectorXd&, const SolvedState& st) { return generation_cost(model, st); }, {}, hess};
    std::vector<VectorXd> starts{loads.x.head(n).cwiseMax(P.lo).cwiseMin(P.hi)};
    starts.push_back(0.5 * (P.lo + P.hi));
    return run(P, starts, loads, opt);
}

}  // namespace dsagen::acproj
