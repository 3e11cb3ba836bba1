#include "dsagen/relaxation.hpp"

#include "dsagen/error.hpp"

#include <cmath>

namespace dsagen::relaxation {

using conic::LinExpr;
using conic::Var;

bool TightenedBounds::nested_in(const TightenedBounds& o, double tol) const {
    auto inside = [tol](const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Eigen::VectorXd& olo,
                        const Eigen::VectorXd& ohi) {
        return ((lo - olo).array() >= -tol).all() && ((ohi - hi).array() >= -tol).all() &&
               ((hi - lo).array() >= -tol).all();
    };
    return inside(v_min, v_max, o.v_min, o.v_max) && inside(theta_min, theta_max, o.theta_min, o.theta_max) &&
           inside(box.lower, box.upper, o.box.lower, o.box.upper);
}

TightenedBounds initial_bounds(const NetworkModel& model, double load_range) {
    TightenedBounds b;
    const int n = model.n_buses(), L = model.n_lines();
    b.v_min.resize(n);
    b.v_max.resize(n);
    for (int i = 0; i < n; ++i) {
        b.v_min[i] = model.buses()[i].v_min;
        b.v_max[i] = model.buses()[i].v_max;
    }
    b.theta_min.resize(L);
    b.theta_max.resize(L);
    for (int i = 0; i < L; ++i) {
        b.theta_min[i] = model.lines()[i].theta_min;
        b.theta_max[i] = model.lines()[i].theta_max;
    }
    b.box = netmodel::input_box(model, load_range);
    return b;
}

std::string to_string(QcStatus s) {
    switch (s) {
        case QcStatus::Optimal: return "optimal";
        case QcStatus::Infeasible: return "infeasible";
        case QcStatus::NumericalFailure: return "numerical-failure";
    }
    return "?";
}

conic::Settings SolveOptions::settings() const {
    conic::Settings s;
    s.inaccurate_tol = conic_tol;
    return s;
}

QcFormulation::QcFormulation(const NetworkModel& net, const TightenedBounds& bd) : net_(net) {
    const int nb = net.n_buses(), ng = net.n_gens(), nl = net.n_lines(), nd = net.n_loads();
    const auto& lay = net.layout();
    const double base = net.base_mva();
    if (bd.v_min.size() != nb || bd.theta_min.size() != nl || bd.box.lower.size() != lay.dimension()) {
        throw invalid_error("bounds do not match the network");
    }

    // Voltage magnitude bounds, intersected with the VG box of generator buses.
    Eigen::VectorXd vlo = bd.v_min, vhi = bd.v_max;
    for (int g = 0; g < ng; ++g) {
        const int b = net.bus_index(net.generators()[g].bus_id);
        vlo[b] = std::max(vlo[b], bd.box.lower[lay.vg_offset() + g]);
        vhi[b] = std::min(vhi[b], bd.box.upper[lay.vg_offset() + g]);
    }
    for (int i = 0; i < nb; ++i) {
        if (vlo[i] > vhi[i]) throw invalid_error("empty voltage interval at bus " + std::to_string(net.buses()[i].id));
    }

    for (int i = 0; i < nb; ++i) {
        v_.push_back(cm_.add_var(vlo[i], vhi[i]));
        w_.push_back(cm_.add_var(vlo[i] * vlo[i], vhi[i] * vhi[i]));
        th_.push_back(i == net.slack_bus() ? cm_.add_var(0.0, 0.0) : cm_.add_var());
        // w >= v^2 and the chord above it.
        cm_.add_rsoc(w_[i], 1.0, {v_[i]});
        cm_.add_le(w_[i] - (vlo[i] + vhi[i]) * LinExpr(v_[i]) + vlo[i] * vhi[i]);
    }
    for (int g = 0; g < ng; ++g) {
        const auto& gen = net.generators()[g];
        double lo = gen.p_min / base, hi = gen.p_max / base;
        const int k = lay.pg_coordinate(g);
        if (k >= 0) {
            lo = std::max(lo, bd.box.lower[lay.pg_offset() + k]);
            hi = std::min(hi, bd.box.upper[lay.pg_offset() + k]);
        }
        if (lo > hi) throw invalid_error("empty active-power interval for generator " + std::to_string(gen.id));
        pg_.push_back(cm_.add_var(lo, hi));
        qg_.push_back(cm_.add_var(gen.q_min / base, gen.q_max / base));
    }
    for (int l = 0; l < nd; ++l) {
        pd_.push_back(cm_.add_var(bd.box.lower[lay.pd_offset() + l], bd.box.upper[lay.pd_offset() + l]));
        qd_.push_back(cm_.add_var(bd.box.lower[lay.qd_offset() + l], bd.box.upper[lay.qd_offset() + l]));
    }

    std::vector<LinExpr> p_inj(nb), q_inj(nb);
    for (int i = 0; i < nl; ++i) {
        const auto& line = net.lines()[i];
        const int f = net.bus_index(line.from_bus), t = net.bus_index(line.to_bus);
        const double tl = bd.theta_min[i], tu = bd.theta_max[i];
        if (!(tl <= tu) || tl < -M_PI / 2 || tu > M_PI / 2) {
            throw invalid_error("angle-difference bounds must lie within [-pi/2, pi/2] with min <= max");
        }
        const LinExpr td = LinExpr(th_[f]) - th_[t];
        cm_.add_le(tl - td);
        cm_.add_le(td - tu);

        const double vvl = vlo[f] * vlo[t], vvu = vhi[f] * vhi[t];
        const double csl = std::min(std::cos(tl), std::cos(tu));
        const double csu = (tl <= 0.0 && tu >= 0.0) ? 1.0 : std::max(std::cos(tl), std::cos(tu));
        const double snl = std::sin(tl), snu = std::sin(tu);

        const Var vv = cm_.add_var(vvl, vvu);
        const Var cs = cm_.add_var(csl, csu);
        const Var sn = cm_.add_var(snl, snu);
        const Var wr = cm_.add_var();
        const Var wi = cm_.add_var();
        const Var ll = cm_.add_var(0.0);
        const Var pf = cm_.add_var(), qf = cm_.add_var(), pt = cm_.add_var(), qt = cm_.add_var();
        wr_.push_back(wr);
        wi_.push_back(wi);
        l_.push_back(ll);
        pf_.push_back(pf);
        qf_.push_back(qf);
        pt_.push_back(pt);
        qt_.push_back(qt);

        // McCormick for a*b with a in [al, au], b in [bl, bu].
        auto mccormick = [&](Var z, Var a, double al, double au, Var b, double bl, double bu) {
            cm_.add_le(al * LinExpr(b) + bl * LinExpr(a) - al * bl - z);
            cm_.add_le(au * LinExpr(b) + bu * LinExpr(a) - au * bu - z);
            cm_.add_le(LinExpr(z) - al * LinExpr(b) - bu * LinExpr(a) + al * bu);
            cm_.add_le(LinExpr(z) - au * LinExpr(b) - bl * LinExpr(a) + au * bl);
        };
        mccormick(vv, v_[f], vlo[f], vhi[f], v_[t], vlo[t], vhi[t]);

        // Cosine: quadratic cap from above, secant from below.
        const double tm = std::max(std::abs(tl), std::abs(tu));
        if (tm > 0.0) {
            const double k = (1.0 - std::cos(tm)) / (tm * tm);
            cm_.add_rsoc(1.0 - LinExpr(cs), 1.0, {std::sqrt(k) * td});
        } else {
            cm_.add_le(1.0 - LinExpr(cs));
        }
        if (tu - tl > 1e-12) {
            const double slope = (std::cos(tu) - std::cos(tl)) / (tu - tl);
            cm_.add_le(std::cos(tl) + slope * (td - tl) - cs);
        }

        // Sine: concave on the positive half-interval, convex on the negative.
        auto sin_upper_tangent = [&](double a) { cm_.add_le(LinExpr(sn) - std::sin(a) - std::cos(a) * (td - a)); };
        auto sin_lower_tangent = [&](double a) { cm_.add_le(std::sin(a) + std::cos(a) * (td - a) - sn); };
        auto secant = [&](bool upper) {
            if (tu - tl <= 1e-12) return;
            const double slope = (snu - snl) / (tu - tl);
            const LinExpr s = snl + slope * (td - tl);
            if (upper) cm_.add_le(LinExpr(sn) - s);
            else cm_.add_le(s - sn);
        };
        if (tl >= 0.0) {
            secant(false);
            sin_upper_tangent(tl);
            sin_upper_tangent(0.5 * (tl + tu));
            sin_upper_tangent(tu);
        } else if (tu <= 0.0) {
            secant(true);
            sin_lower_tangent(tl);
            sin_lower_tangent(0.5 * (tl + tu));
            sin_lower_tangent(tu);
        } else {
            sin_upper_tangent(0.5 * tm);
            sin_lower_tangent(-0.5 * tm);
        }

        mccormick(wr, vv, vvl, vvu, cs, csl, csu);
        mccormick(wi, vv, vvl, vvu, sn, snl, snu);

        // |W_ft|^2 <= W_ff W_tt and the linearized angle limits.
        cm_.add_rsoc(w_[f], w_[t], {wr, wi});
        cm_.add_le(std::tan(tl) * LinExpr(wr) - wi);
        cm_.add_le(LinExpr(wi) - std::tan(tu) * LinExpr(wr));

        // Branch flows from the two-port: S_f = conj(yff) w_f + conj(yft) W, S_t = conj(ytt) w_t + conj(ytf) conj(W).
        const auto y = netmodel::branch_admittance(line);
        const netmodel::Complex a = std::conj(y.yft), c = std::conj(y.ytf);
        cm_.add_eq(LinExpr(pf) - y.yff.real() * LinExpr(w_[f]) - a.real() * LinExpr(wr) + a.imag() * LinExpr(wi));
        cm_.add_eq(LinExpr(qf) + y.yff.imag() * LinExpr(w_[f]) - a.real() * LinExpr(wi) - a.imag() * LinExpr(wr));
        cm_.add_eq(LinExpr(pt) - y.ytt.real() * LinExpr(w_[t]) - c.real() * LinExpr(wr) - c.imag() * LinExpr(wi));
        cm_.add_eq(LinExpr(qt) + y.ytt.imag() * LinExpr(w_[t]) - c.imag() * LinExpr(wr) + c.real() * LinExpr(wi));

        // Series loss and series-current cone.
        const double tm2 = line.tap * line.tap;
        const double bc = 0.5 * line.b_charging;
        cm_.add_eq(LinExpr(pf) + pt - line.z.real() * LinExpr(ll));
        cm_.add_eq(LinExpr(qf) + qt - line.z.imag() * LinExpr(ll) + bc / tm2 * LinExpr(w_[f]) + bc * LinExpr(w_[t]));
        cm_.add_rsoc((1.0 / tm2) * LinExpr(w_[f]), ll, {pf, LinExpr(qf) + bc / tm2 * LinExpr(w_[f])});

        if (std::isfinite(line.s_max)) {
            const double smax = line.s_max / base;
            cm_.add_soc({smax, pf, qf});
            cm_.add_soc({smax, pt, qt});
        }

        p_inj[f] += pf;
        q_inj[f] += qf;
        p_inj[t] += pt;
        q_inj[t] += qt;
    }

    for (int i = 0; i < nb; ++i) {
        LinExpr p = -p_inj[i], q = -q_inj[i];
        for (int g : net.gens_at_bus()[i]) {
            p += pg_[g];
            q += qg_[g];
        }
        const int l = net.load_at_bus()[i];
        if (l >= 0) {
            p -= pd_[l];
            q -= qd_[l];
        }
        p -= net.buses()[i].gs * LinExpr(w_[i]);
        q += net.buses()[i].bs * LinExpr(w_[i]);
        cm_.add_eq(p);
        cm_.add_eq(q);
    }

    for (int g = 0; g < ng; ++g) {
        const double c2 = net.generators()[g].cost.c2;
        if (c2 > 0.0) {
            cost_epi_.push_back(cm_.add_var(0.0));
            cm_.add_rsoc(cost_epi_.back(), 1.0, {std::sqrt(c2) * base * LinExpr(pg_[g])});
        } else {
            cost_epi_.push_back(Var{});
        }
    }
}

LinExpr QcFormulation::input(int k) const {
    const auto& lay = net_.layout();
    if (k < lay.vg_offset()) return pg_[lay.pg_generator(k)];
    if (k < lay.pd_offset()) return v_[net_.bus_index(net_.generators()[k - lay.vg_offset()].bus_id)];
    if (k < lay.qd_offset()) return pd_[k - lay.pd_offset()];
    return qd_[k - lay.qd_offset()];
}

LinExpr QcFormulation::angle_difference(int line) const {
    const auto& ln = net_.lines()[line];
    return LinExpr(th_[net_.bus_index(ln.from_bus)]) - th_[net_.bus_index(ln.to_bus)];
}

LinExpr QcFormulation::cost() const {
    LinExpr e;
    const double base = net_.base_mva();
    for (int g = 0; g < net_.n_gens(); ++g) {
        const auto& c = net_.generators()[g].cost;
        if (cost_epi_[g].index >= 0) e += cost_epi_[g];
        e += c.c1 * base * LinExpr(pg_[g]);
        e += c.c0;
    }
    return e;
}

RelaxedSolution QcFormulation::extract(const conic::ModelSolution& sol) const {
    RelaxedSolution r;
    if (sol.status == conic::Status::PrimalInfeasible) {
        r.status = QcStatus::Infeasible;
        return r;
    }
    if (!sol.solved()) return r;
    r.status = QcStatus::Optimal;
    r.objective = sol.objective;
    const int dim = net_.layout().dimension();
    r.x.x.resize(dim);
    for (int k = 0; k < dim; ++k) r.x.x[k] = sol.value(input(k));
    auto grab = [&](const std::vector<Var>& vars) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(vars.size()));
        for (std::size_t i = 0; i < vars.size(); ++i) out[i] = sol[vars[i]];
        return out;
    };
    r.v = grab(v_);
    r.theta = grab(th_);
    r.w = grab(w_);
    r.wr = grab(wr_);
    r.wi = grab(wi_);
    r.l = grab(l_);
    r.s_from.resize(net_.n_lines());
    r.s_to.resize(net_.n_lines());
    for (int i = 0; i < net_.n_lines(); ++i) {
        r.s_from[i] = {sol[pf_[i]], sol[qf_[i]]};
        r.s_to[i] = {sol[pt_[i]], sol[qt_[i]]};
    }
    r.sg.resize(net_.n_gens());
    for (int g = 0; g < net_.n_gens(); ++g) r.sg[g] = {sol[pg_[g]], sol[qg_[g]]};
    return r;
}

RelaxedSolution solve_qc(const NetworkModel& model, const TightenedBounds& bounds, const QcObjective& objective,
                         const SolveOptions& opt) {
    QcFormulation f(model, bounds);
    if (objective.kind == QcObjective::Kind::Cost) {
        f.model().minimize(f.cost());
    } else {
        if (objective.weights.size() != model.layout().dimension()) {
            throw invalid_error("objective weights do not match the input dimension");
        }
        LinExpr e;
        for (int k = 0; k < objective.weights.size(); ++k) {
            if (objective.weights[k] != 0.0) e += objective.weights[k] * f.input(k);
        }
        f.model().minimize(e);
    }
    return f.extract(f.model().solve(opt.settings()));
}

Projection closest_qc_projection(const NetworkModel& model, const TightenedBounds& bounds, const OperatingPoint& x_hat,
                                 const SolveOptions& opt) {
    const int dim = model.layout().dimension();
    if (x_hat.x.size() != dim) throw invalid_error("operating point does not match the network");
    if (!bounds.box.contains(x_hat.x, 1e-9)) throw invalid_error("point to project lies outside the box bounds");
    QcFormulation f(model, bounds);
    const Var R = f.model().add_var(0.0);
    std::vector<LinExpr> cone{R};
    for (int k = 0; k < dim; ++k) cone.push_back(f.input(k) - x_hat.x[k]);
    f.model().add_soc(cone);
    f.model().minimize(R);
    const conic::ModelSolution sol = f.model().solve(opt.settings());
    if (sol.status == conic::Status::PrimalInfeasible) throw invalid_error("relaxation infeasible under bounds");
    if (!sol.solved()) throw numerical_error("relaxation projection failed: " + conic::to_string(sol.status));
    Projection p;
    p.x_star.x.resize(dim);
    for (int k = 0; k < dim; ++k) p.x_star.x[k] = sol.value(f.input(k));
    p.R = (p.x_star.x - x_hat.x).norm();
    return p;
}

TightenedBounds obbt(const NetworkModel& model, const TightenedBounds& bounds, int iterations, const SolveOptions& opt) {
    if (iterations < 1) throw invalid_error("bound tightening needs at least one iteration");
    // Optima are widened by this much before use so solver error never cuts feasible points.
    const double margin = opt.conic_tol;
    TightenedBounds cur = bounds;
    for (int it = 0; it < iterations; ++it) {
        QcFormulation f(model, cur);
        conic::Problem P = f.model().build();
        const int n = static_cast<int>(P.c.size());
        auto extreme = [&](const LinExpr& e, double sign) {
            P.c = Eigen::VectorXd::Zero(n);
            for (const auto& [i, a] : e.terms()) P.c[i] += sign * a;
            const conic::Result r = conic::solve(P, opt.settings());
            if (r.status == conic::Status::PrimalInfeasible) throw invalid_error("relaxation infeasible under bounds");
            if (!r.solved()) return std::optional<double>{};
            return std::optional<double>(e.value(r.x));
        };
        auto tighten = [&](const LinExpr& e, double& lo, double& hi) {
            const auto mn = extreme(e, 1.0);
            const auto mx = extreme(e, -1.0);
            double nlo = lo, nhi = hi;
            if (mn) nlo = std::max(lo, *mn - margin);
            if (mx) nhi = std::min(hi, *mx + margin);
            if (nlo > nhi) nlo = nhi = 0.5 * (nlo + nhi);
            lo = nlo;
            hi = nhi;
        };
        TightenedBounds next = cur;
        for (int b = 0; b < model.n_buses(); ++b) tighten(f.v(b), next.v_min[b], next.v_max[b]);
        for (int l = 0; l < model.n_lines(); ++l) {
            tighten(f.angle_difference(l), next.theta_min[l], next.theta_max[l]);
        }
        for (int k = 0; k < model.layout().dimension(); ++k) {
            if (cur.box.upper[k] - cur.box.lower[k] <= 0.0) continue;
            tighten(f.input(k), next.box.lower[k], next.box.upper[k]);
        }
        cur = next;
    }
    return cur;
}

}  // namespace dsagen::relaxation
