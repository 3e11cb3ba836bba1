#include "dsagen/powerflow.hpp"

#include "dsagen/error.hpp"

#include <Eigen/LU>

#include <cmath>

namespace dsagen::powerflow {

namespace {

enum class Kind { Ref, PV, PQ };

struct BusSpec {
    std::vector<Kind> kind;
    Eigen::VectorXd p_spec;  // net injection, p.u.
    Eigen::VectorXd q_spec;  // only meaningful for PQ buses
    Eigen::VectorXd v_set;   // for Ref/PV buses
};

BusSpec make_spec(const NetworkModel& model, const netmodel::Setpoints& sp, const std::vector<char>& limited,
                  const Eigen::VectorXcd* sg_fixed) {
    const int n = model.n_buses();
    const auto& lay = model.layout();
    BusSpec spec{std::vector<Kind>(n, Kind::PQ), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                 Eigen::VectorXd::Ones(n)};

    for (int l = 0; l < model.n_loads(); ++l) {
        const int b = model.bus_index(model.loads()[l].bus_id);
        spec.p_spec[b] -= sp.pd[l];
        spec.q_spec[b] -= sp.qd[l];
    }
    for (int g = 0; g < model.n_gens(); ++g) {
        const int b = model.bus_index(model.generators()[g].bus_id);
        const int k = lay.pg_coordinate(g);
        if (k >= 0) spec.p_spec[b] += sp.pg[k];
        if (!limited.empty() && limited[g] && sg_fixed) spec.q_spec[b] += (*sg_fixed)[g].imag();
    }
    for (int b = 0; b < n; ++b) {
        const auto& gens = model.gens_at_bus()[b];
        bool regulating = false;
        for (int g : gens) {
            if (limited.empty() || !limited[g]) {
                if (!regulating) spec.v_set[b] = sp.vg[g];
                regulating = true;
            }
        }
        if (b == model.slack_bus()) {
            spec.kind[b] = Kind::Ref;
            spec.v_set[b] = sp.vg[model.slack_gen()];
        } else if (regulating) {
            spec.kind[b] = Kind::PV;
        }
    }
    return spec;
}

Eigen::VectorXcd bus_injection(const Eigen::MatrixXcd& Y, const Eigen::VectorXcd& V) {
    return V.cwiseProduct((Y * V).conjugate());
}

struct NewtonResult {
    Eigen::VectorXd vm, va;
    bool converged = false;
    int iterations = 0;
    double mismatch = 0.0;
};

NewtonResult newton(const NetworkModel& model, const BusSpec& spec, Eigen::VectorXd vm, Eigen::VectorXd va,
                    const Tolerances& tol) {
    const Eigen::MatrixXcd& Y = model.admittance();
    const int n = model.n_buses();
    std::vector<int> pvpq, pq;
    for (int b = 0; b < n; ++b) {
        if (spec.kind[b] != Kind::Ref) pvpq.push_back(b);
        if (spec.kind[b] == Kind::PQ) pq.push_back(b);
        if (spec.kind[b] != Kind::PQ) vm[b] = spec.v_set[b];
    }
    va[model.slack_bus()] = 0.0;
    const int npv = static_cast<int>(pvpq.size());
    const int npq = static_cast<int>(pq.size());
    const int dim = npv + npq;

    NewtonResult res;
    auto mismatch = [&](const Eigen::VectorXcd& V) {
        const Eigen::VectorXcd S = bus_injection(Y, V);
        Eigen::VectorXd F(dim);
        for (int i = 0; i < npv; ++i) F[i] = S[pvpq[i]].real() - spec.p_spec[pvpq[i]];
        for (int i = 0; i < npq; ++i) F[npv + i] = S[pq[i]].imag() - spec.q_spec[pq[i]];
        return F;
    };

    Eigen::VectorXcd V(n);
    for (int b = 0; b < n; ++b) V[b] = std::polar(vm[b], va[b]);
    Eigen::VectorXd F = mismatch(V);
    res.mismatch = dim ? F.lpNorm<Eigen::Infinity>() : 0.0;

    for (int it = 0; it <= tol.max_iter; ++it) {
        if (!std::isfinite(res.mismatch) || res.mismatch > 1e10) break;
        if (res.mismatch <= tol.pf_tol) {
            res.converged = true;
            res.iterations = it;
            break;
        }
        if (it == tol.max_iter) break;

        const Eigen::VectorXcd Ibus = Y * V;
        Eigen::VectorXcd Vnorm(n);
        for (int b = 0; b < n; ++b) Vnorm[b] = V[b] / std::abs(V[b]);
        // dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        Eigen::MatrixXd J(dim, dim);
        auto dS_dVm = [&](int r, int c) {
            Complex v = V[r] * std::conj(Y(r, c) * Vnorm[c]);
            if (r == c) v += std::conj(Ibus[r]) * Vnorm[r];
            return v;
        };
        auto dS_dVa = [&](int r, int c) {
            Complex inner = -Y(r, c) * V[c];
            if (r == c) inner += Ibus[r];
            return Complex(0.0, 1.0) * V[r] * std::conj(inner);
        };
        for (int i = 0; i < npv; ++i) {
            for (int j = 0; j < npv; ++j) J(i, j) = dS_dVa(pvpq[i], pvpq[j]).real();
            for (int j = 0; j < npq; ++j) J(i, npv + j) = dS_dVm(pvpq[i], pq[j]).real();
        }
        for (int i = 0; i < npq; ++i) {
            for (int j = 0; j < npv; ++j) J(npv + i, j) = dS_dVa(pq[i], pvpq[j]).imag();
            for (int j = 0; j < npq; ++j) J(npv + i, npv + j) = dS_dVm(pq[i], pq[j]).imag();
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
        const Eigen::VectorXd dx = -lu.solve(F);
        if (!dx.allFinite()) break;
        for (int i = 0; i < npv; ++i) va[pvpq[i]] += dx[i];
        for (int i = 0; i < npq; ++i) vm[pq[i]] += dx[npv + i];
        for (int b = 0; b < n; ++b) V[b] = std::polar(vm[b], va[b]);
        F = mismatch(V);
        res.mismatch = F.lpNorm<Eigen::Infinity>();
        res.iterations = it + 1;
    }
    res.vm = vm;
    res.va = va;
    return res;
}

void fill_outputs(const NetworkModel& model, const netmodel::Setpoints& sp, const std::vector<char>& limited,
                  const Eigen::VectorXcd& sg_fixed, SolvedState& st) {
    const int n = model.n_buses();
    const Eigen::VectorXcd V = st.voltage();
    const Eigen::VectorXcd S = bus_injection(model.admittance(), V);
    const auto& lay = model.layout();

    Eigen::VectorXcd load = Eigen::VectorXcd::Zero(n);
    for (int l = 0; l < model.n_loads(); ++l) {
        load[model.bus_index(model.loads()[l].bus_id)] += Complex(sp.pd[l], sp.qd[l]);
    }
    st.sg = Eigen::VectorXcd::Zero(model.n_gens());
    for (int b = 0; b < n; ++b) {
        const auto& gens = model.gens_at_bus()[b];
        if (gens.empty()) continue;
        const Complex gen_total = S[b] + load[b];
        double p_free = gen_total.real();
        double q_free = gen_total.imag();
        double q_range = 0.0;
        int n_free = 0;
        for (int g : gens) {
            const int k = lay.pg_coordinate(g);
            if (k >= 0) {
                st.sg[g] = Complex(sp.pg[k], 0.0);
                p_free -= sp.pg[k];
            }
            if (!limited.empty() && limited[g]) {
                st.sg[g] = Complex(st.sg[g].real(), sg_fixed[g].imag());
                q_free -= sg_fixed[g].imag();
            } else {
                q_range += model.generators()[g].q_max - model.generators()[g].q_min;
                ++n_free;
            }
        }
        for (int g : gens) {
            if (g == model.slack_gen()) st.sg[g] = Complex(p_free, st.sg[g].imag());
            if (!limited.empty() && limited[g]) continue;
            const auto& gen = model.generators()[g];
            const double share = q_range > 0.0 ? (gen.q_max - gen.q_min) / q_range : 1.0 / n_free;
            st.sg[g] = Complex(st.sg[g].real(), q_free * share);
        }
    }

    st.s_from.resize(model.n_lines());
    st.s_to.resize(model.n_lines());
    for (int i = 0; i < model.n_lines(); ++i) {
        const auto& line = model.lines()[i];
        const int f = model.bus_index(line.from_bus);
        const int t = model.bus_index(line.to_bus);
        const auto y = netmodel::branch_admittance(line);
        st.s_from[i] = V[f] * std::conj(y.yff * V[f] + y.yft * V[t]);
        st.s_to[i] = V[t] * std::conj(y.ytf * V[f] + y.ytt * V[t]);
    }
}

}  // namespace

Eigen::VectorXcd SolvedState::voltage() const {
    Eigen::VectorXcd V(vm.size());
    for (Eigen::Index i = 0; i < vm.size(); ++i) V[i] = std::polar(vm[i], va[i]);
    return V;
}

SolvedState solve_pf(const NetworkModel& model, const OperatingPoint& op, bool enforce_q_limits,
                     const Tolerances& tol, const SolvedState* warm_start) {
    const netmodel::Setpoints sp = netmodel::decode(model, op);
    const int n = model.n_buses();
    const double base = model.base_mva();

    Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
    if (warm_start && warm_start->vm.size() == n && warm_start->vm.allFinite() && warm_start->va.allFinite()) {
        vm = warm_start->vm;
        va = warm_start->va;
    }

    std::vector<char> limited(model.n_gens(), 0);
    Eigen::VectorXcd sg_fixed = Eigen::VectorXcd::Zero(model.n_gens());
    SolvedState st;
    int total_iters = 0;

    for (int round = 0;; ++round) {
        const BusSpec spec = make_spec(model, sp, limited, &sg_fixed);
        NewtonResult nr = newton(model, spec, vm, va, tol);
        total_iters += nr.iterations;
        st.vm = nr.vm;
        st.va = nr.va;
        st.converged = nr.converged;
        st.mismatch = nr.mismatch;
        st.iterations = total_iters;
        st.q_limited = limited;
        if (!nr.converged) {
            st.sg = Eigen::VectorXcd::Constant(model.n_gens(), Complex(NAN, NAN));
            st.s_from = Eigen::VectorXcd::Constant(model.n_lines(), Complex(NAN, NAN));
            st.s_to = st.s_from;
            return st;
        }
        fill_outputs(model, sp, limited, sg_fixed, st);
        if (!enforce_q_limits) return st;

        bool switched = false;
        for (int g = 0; g < model.n_gens(); ++g) {
            if (limited[g] || g == model.slack_gen()) continue;
            const int b = model.bus_index(model.generators()[g].bus_id);
            if (b == model.slack_bus()) continue;
            const auto& gen = model.generators()[g];
            const double q = st.sg[g].imag();
            if (q > gen.q_max / base + tol.feas_tol) {
                limited[g] = 1;
                sg_fixed[g] = Complex(0.0, gen.q_max / base);
                switched = true;
            } else if (q < gen.q_min / base - tol.feas_tol) {
                limited[g] = 1;
                sg_fixed[g] = Complex(0.0, gen.q_min / base);
                switched = true;
            }
        }
        if (!switched) return st;
        if (round + 1 >= tol.max_switch_rounds) {
            throw numerical_error("reactive limit switching did not settle after " +
                                  std::to_string(tol.max_switch_rounds) + " rounds");
        }
        vm = st.vm;
        va = st.va;
    }
}

std::string to_string(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::VoltageMagnitude: return "voltage";
        case ConstraintKind::GeneratorPower: return "generator";
        case ConstraintKind::LineFlow: return "flow";
        case ConstraintKind::AngleDifference: return "angle";
    }
    return "?";
}

FeasibilityReport check_feasibility(const NetworkModel& model, const SolvedState& state, const Tolerances& tol) {
    if (!state.converged) throw invalid_error("cannot assess feasibility of diverged flow");
    FeasibilityReport rep;
    const double base = model.base_mva();
    auto add = [&](ConstraintKind k, std::string element, double over) {
        if (over > tol.feas_tol) rep.violations.push_back({k, std::move(element), over});
    };

    for (int b = 0; b < model.n_buses(); ++b) {
        const auto& bus = model.buses()[b];
        const std::string name = "bus " + std::to_string(bus.id);
        add(ConstraintKind::VoltageMagnitude, name, state.vm[b] - bus.v_max);
        add(ConstraintKind::VoltageMagnitude, name, bus.v_min - state.vm[b]);
    }
    for (int g = 0; g < model.n_gens(); ++g) {
        const auto& gen = model.generators()[g];
        const std::string name = "gen " + std::to_string(gen.id);
        add(ConstraintKind::GeneratorPower, name + " P", state.sg[g].real() - gen.p_max / base);
        add(ConstraintKind::GeneratorPower, name + " P", gen.p_min / base - state.sg[g].real());
        add(ConstraintKind::GeneratorPower, name + " Q", state.sg[g].imag() - gen.q_max / base);
        add(ConstraintKind::GeneratorPower, name + " Q", gen.q_min / base - state.sg[g].imag());
    }
    for (int i = 0; i < model.n_lines(); ++i) {
        const auto& line = model.lines()[i];
        const std::string name = "line " + std::to_string(line.from_bus) + "-" + std::to_string(line.to_bus);
        if (std::isfinite(line.s_max)) {
            add(ConstraintKind::LineFlow, name + " from", std::abs(state.s_from[i]) - line.s_max / base);
            add(ConstraintKind::LineFlow, name + " to", std::abs(state.s_to[i]) - line.s_max / base);
        }
        const double dth = state.va[model.bus_index(line.from_bus)] - state.va[model.bus_index(line.to_bus)];
        add(ConstraintKind::AngleDifference, name, dth - line.theta_max);
        add(ConstraintKind::AngleDifference, name, line.theta_min - dth);
    }
    rep.feasible = rep.violations.empty();
    return rep;
}

OperatingPoint realized_setpoints(const NetworkModel& model, const OperatingPoint& op, const SolvedState& state) {
    OperatingPoint out = op;
    const int off = model.layout().vg_offset();
    for (int g = 0; g < model.n_gens(); ++g) {
        out.x[off + g] = state.vm[model.bus_index(model.generators()[g].bus_id)];
    }
    return out;
}

Complex network_losses(const NetworkModel& model, const SolvedState& state) {
    Complex total(0.0, 0.0);
    for (int i = 0; i < model.n_lines(); ++i) total += state.s_from[i] + state.s_to[i];
    const Eigen::VectorXcd V = state.voltage();
    for (int b = 0; b < model.n_buses(); ++b) {
        const auto& bus = model.buses()[b];
        total += std::norm(V[b]) * Complex(bus.gs, -bus.bs);
    }
    return total;
}

}  // namespace dsagen::powerflow
