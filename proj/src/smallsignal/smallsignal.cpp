#include "dsagen/smallsignal.hpp"

#include "dsagen/error.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dsagen::smallsignal {

namespace {

using netmodel::Complex;

// Forward-mode dual number for exact Jacobian columns.
struct Dual {
    double v = 0.0;
    double d = 0.0;
    Dual() = default;
    Dual(double value, double deriv = 0.0) : v(value), d(deriv) {}  // NOLINT(google-explicit-constructor)
};

Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
Dual sin(Dual a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
Dual cos(Dual a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }

constexpr int kStates = 6;
enum StateSlot { kDelta, kOmega, kEq, kEd, kEfd, kPm };

struct Machine {
    int gen = 0;
    int bus = 0;
    // Reciprocal time constants; zero freezes the state.
    double inv_2h = 0.0, inv_td0 = 0.0, inv_tq0 = 0.0, inv_ta = 0.0, inv_tg = 0.0;
    double D = 0.0, xd = 0.0, xq = 0.0, xd_p = 0.0, xq_p = 0.0, Ka = 0.0, inv_rg = 0.0;
    double v_ref = 0.0, p_ref = 0.0;
};

struct Setup {
    double omega_s = 0.0;
    std::vector<Machine> machines;
    std::vector<int> free_index;  ///< per bus: position among free buses, or -1
    std::vector<int> free_buses;
    Eigen::VectorXd vm, va;       ///< power-flow voltages (fixed buses keep them)
    std::vector<std::vector<std::pair<int, Complex>>> ybus_rows;
    std::vector<Complex> load;    ///< constant-power demand at free buses
    Eigen::VectorXd x0, y0;
};

template <class T>
void residual(const Setup& s, const std::vector<T>& x, const std::vector<T>& y, std::vector<T>& f,
              std::vector<T>& g) {
    const int nm = static_cast<int>(s.machines.size());
    const int nb = static_cast<int>(s.free_index.size());
    std::vector<T> vm(nb), va(nb);
    for (int b = 0; b < nb; ++b) {
        const int k = s.free_index[b];
        if (k < 0) {
            vm[b] = T(s.vm[b]);
            va[b] = T(s.va[b]);
        } else {
            va[b] = y[2 * nm + 2 * k];
            vm[b] = y[2 * nm + 2 * k + 1];
        }
    }
    std::vector<T> p_bus(s.free_buses.size(), T(0.0)), q_bus(s.free_buses.size(), T(0.0));
    for (int i = 0; i < nm; ++i) {
        const Machine& m = s.machines[i];
        const T* xi = &x[kStates * i];
        const T id = y[2 * i], iq = y[2 * i + 1];
        const T ang = xi[kDelta] - va[m.bus];
        const T vd = vm[m.bus] * sin(ang), vq = vm[m.bus] * cos(ang);
        const T pe = xi[kEd] * id + xi[kEq] * iq + T(m.xq_p - m.xd_p) * id * iq;
        const T dw = xi[kOmega] - T(1.0);

        T* fi = &f[kStates * i];
        fi[kDelta] = T(s.omega_s) * dw;
        fi[kOmega] = T(m.inv_2h) * (xi[kPm] - pe - T(m.D) * dw);
        fi[kEq] = T(m.inv_td0) * (xi[kEfd] - xi[kEq] - T(m.xd - m.xd_p) * id);
        fi[kEd] = T(m.inv_tq0) * (T(m.xq - m.xq_p) * iq - xi[kEd]);
        fi[kEfd] = T(m.inv_ta) * (T(m.Ka) * (T(m.v_ref) - vm[m.bus]) - xi[kEfd]);
        fi[kPm] = T(m.inv_tg) * (T(m.p_ref) - T(m.inv_rg) * dw - xi[kPm]);

        g[2 * i] = xi[kEd] - vd + T(m.xq_p) * iq;
        g[2 * i + 1] = xi[kEq] - vq - T(m.xd_p) * id;

        const int k = s.free_index[m.bus];
        if (k >= 0) {
            p_bus[k] = p_bus[k] + vd * id + vq * iq;
            q_bus[k] = q_bus[k] + vq * id - vd * iq;
        }
    }
    for (std::size_t k = 0; k < s.free_buses.size(); ++k) {
        const int b = s.free_buses[k];
        T p(0.0), q(0.0);
        for (const auto& [j, yij] : s.ybus_rows[b]) {
            const T t = va[b] - va[j];
            const T c = cos(t), sn = sin(t);
            p = p + vm[j] * (T(yij.real()) * c + T(yij.imag()) * sn);
            q = q + vm[j] * (T(yij.real()) * sn - T(yij.imag()) * c);
        }
        p = vm[b] * p;
        q = vm[b] * q;
        const int row = 2 * static_cast<int>(s.machines.size()) + 2 * static_cast<int>(k);
        g[row] = p_bus[k] - T(s.load[k].real()) - p;
        g[row + 1] = q_bus[k] - T(s.load[k].imag()) - q;
    }
}

double reciprocal(double t) { return std::isinf(t) ? 0.0 : 1.0 / t; }

Setup build_setup(const NetworkModel& model, const DynamicsData& dyn, const SolvedState& st) {
    if (!st.converged) throw invalid_error("linearization requires a converged power-flow state");
    if (static_cast<int>(dyn.machines.size()) != model.n_gens()) {
        throw invalid_error("dynamics data does not match the generator count");
    }
    Setup s;
    s.omega_s = dyn.omega_s();
    s.vm = st.vm;
    s.va = st.va;
    const int nb = model.n_buses();
    s.free_index.assign(nb, 0);
    for (int g = 0; g < model.n_gens(); ++g) {
        if (!dyn.machines[g]) s.free_index[model.bus_index(model.generators()[g].bus_id)] = -1;
    }
    for (int b = 0; b < nb; ++b) {
        if (s.free_index[b] == 0) {
            s.free_index[b] = static_cast<int>(s.free_buses.size());
            s.free_buses.push_back(b);
        }
    }
    const Eigen::MatrixXcd& Y = model.admittance();
    s.ybus_rows.resize(nb);
    for (int i = 0; i < nb; ++i) {
        for (int j = 0; j < nb; ++j) {
            if (Y(i, j) != Complex(0.0, 0.0)) s.ybus_rows[i].emplace_back(j, Y(i, j));
        }
    }
    const Eigen::VectorXcd V = st.voltage();
    const Eigen::VectorXcd S = V.array() * (Y * V).conjugate().array();

    std::vector<double> x0, y0;
    for (int g = 0; g < model.n_gens(); ++g) {
        if (!dyn.machines[g]) continue;
        const MachineDynamics& p = *dyn.machines[g];
        validate(p);
        Machine m;
        m.gen = g;
        m.bus = model.bus_index(model.generators()[g].bus_id);
        m.inv_2h = 1.0 / (2.0 * p.H);
        m.inv_td0 = reciprocal(p.Td0_p);
        m.inv_tq0 = reciprocal(p.Tq0_p);
        m.inv_ta = reciprocal(p.Ta);
        m.inv_tg = reciprocal(p.Tg);
        m.D = p.D;
        m.xd = p.xd;
        m.xq = p.xq;
        m.xd_p = p.xd_p;
        m.xq_p = p.xq_p;
        m.Ka = p.Ka;
        m.inv_rg = 1.0 / p.Rg;

        const Complex vt = V[m.bus];
        const Complex i_sys = std::conj(st.sg[g] / vt);
        const double delta = std::arg(vt + Complex(0.0, p.xq) * i_sys);
        const Complex rot = std::polar(1.0, -(delta - std::numbers::pi / 2.0));
        const Complex idq = i_sys * rot;
        const Complex vdq = vt * rot;
        const double ed = vdq.real() - p.xq_p * idq.imag();
        const double eq = vdq.imag() + p.xd_p * idq.real();
        const double efd = eq + (p.xd - p.xd_p) * idq.real();
        const double pe = vdq.real() * idq.real() + vdq.imag() * idq.imag();
        m.v_ref = std::abs(vt) + efd / p.Ka;
        m.p_ref = pe;
        x0.insert(x0.end(), {delta, 1.0, eq, ed, efd, pe});
        y0.insert(y0.end(), {idq.real(), idq.imag()});
        s.machines.push_back(m);
    }
    if (s.machines.empty()) throw invalid_error("no generator has dynamics data");
    for (int b : s.free_buses) {
        Complex gen(0.0, 0.0);
        for (int g : model.gens_at_bus()[b]) gen += st.sg[g];
        s.load.push_back(gen - S[b]);
        y0.push_back(st.va[b]);
        y0.push_back(st.vm[b]);
    }
    s.x0 = Eigen::Map<Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
    s.y0 = Eigen::Map<Eigen::VectorXd>(y0.data(), static_cast<Eigen::Index>(y0.size()));
    return s;
}

std::string gen_label(const char* name, const NetworkModel& model, int g) {
    return std::string(name) + "_" + std::to_string(model.generators()[g].id);
}

}  // namespace

void validate(const MachineDynamics& m) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw invalid_error(std::string("machine dynamics: ") + what);
    };
    require(m.H > 0.0 && std::isfinite(m.H), "H must be positive");
    require(m.D >= 0.0 && std::isfinite(m.D), "D must be non-negative");
    require(m.xd_p > 0.0 && m.xd >= m.xd_p, "need xd >= xd' > 0");
    require(m.xq_p > 0.0 && m.xq >= m.xq_p, "need xq >= xq' > 0");
    require(m.Td0_p > 0.0 && m.Tq0_p > 0.0, "open-circuit time constants must be positive");
    require(m.Ta > 0.0 && m.Tg > 0.0, "controller time constants must be positive");
    require(m.Ka > 0.0 && std::isfinite(m.Ka), "Ka must be positive");
    require(m.Rg > 0.0 && std::isfinite(m.Rg), "Rg must be positive");
}

double DynamicsData::omega_s() const { return 2.0 * std::numbers::pi * frequency_hz; }

bool DynamicsData::has_infinite_bus() const {
    return std::any_of(machines.begin(), machines.end(), [](const auto& m) { return !m.has_value(); });
}

DynamicsData parse_dynamics(const std::string& json_text, const NetworkModel& model) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("dynamics file: ") + e.what());
    }
    DynamicsData d;
    d.machines.resize(model.n_gens());
    try {
        d.frequency_hz = j.value("frequency_hz", 60.0);
        if (!(d.frequency_hz > 0.0)) throw parse_error("dynamics file: frequency_hz must be positive");
        for (const auto& [key, rec] : j.at("generators").items()) {
            int id = 0;
            try {
                id = std::stoi(key);
            } catch (const std::exception&) {
                throw parse_error("dynamics file: generator key '" + key + "' is not an id");
            }
            int g = -1;
            for (int k = 0; k < model.n_gens(); ++k) {
                if (model.generators()[k].id == id) g = k;
            }
            if (g < 0) throw parse_error("dynamics file: unknown generator id " + key);
            MachineDynamics m;
            m.H = rec.at("H");
            m.D = rec.at("D");
            m.xd = rec.at("xd");
            m.xq = rec.at("xq");
            m.xd_p = rec.at("xd_p");
            m.xq_p = rec.at("xq_p");
            m.Td0_p = rec.at("Td0_p");
            m.Tq0_p = rec.at("Tq0_p");
            m.Ka = rec.at("Ka");
            m.Ta = rec.at("Ta");
            m.Rg = rec.at("Rg");
            m.Tg = rec.at("Tg");
            validate(m);
            d.machines[g] = m;
        }
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("dynamics file: ") + e.what());
    }
    return d;
}

DynamicsData load_dynamics(const std::string& path, const NetworkModel& model) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open dynamics file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_dynamics(ss.str(), model);
}

StateSpace linearize(const NetworkModel& model, const DynamicsData& dyn, const SolvedState& state) {
    const Setup s = build_setup(model, dyn, state);
    const int nx = static_cast<int>(s.x0.size());
    const int ny = static_cast<int>(s.y0.size());

    std::vector<Dual> x(nx), y(ny), f(nx), g(ny);
    for (int i = 0; i < nx; ++i) x[i] = s.x0[i];
    for (int i = 0; i < ny; ++i) y[i] = s.y0[i];
    Eigen::MatrixXd fx(nx, nx), fy(nx, ny), gx(ny, nx), gy(ny, ny);
    auto column = [&](Eigen::MatrixXd& fcol, Eigen::MatrixXd& gcol, int c) {
        residual(s, x, y, f, g);
        for (int r = 0; r < nx; ++r) fcol(r, c) = f[r].d;
        for (int r = 0; r < ny; ++r) gcol(r, c) = g[r].d;
    };
    for (int c = 0; c < nx; ++c) {
        x[c].d = 1.0;
        column(fx, gx, c);
        x[c].d = 0.0;
    }
    for (int c = 0; c < ny; ++c) {
        y[c].d = 1.0;
        column(fy, gy, c);
        y[c].d = 0.0;
    }

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(gy);
    const double rc = lu.rcond();
    if (!(rc > 1e-13)) throw numerical_error("algebraic singularity (voltage collapse proximity)");
    Eigen::MatrixXd A = fx - fy * lu.solve(gx);
    if (!A.allFinite()) throw numerical_error("algebraic singularity (voltage collapse proximity)");

    std::vector<std::string> labels;
    for (const Machine& m : s.machines) {
        for (const char* n : {"delta", "omega", "eq", "ed", "efd", "pm"}) labels.push_back(gen_label(n, model, m.gen));
    }

    if (!dyn.has_infinite_bus()) {
        // Relative angles: delta_i' = delta_i - delta_ref for i != ref. The
        // dynamics do not depend on the common angle, so the reference state
        // decouples and is dropped.
        const int nm = static_cast<int>(s.machines.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Identity(nx, nx);
        Eigen::MatrixXd Tinv = Eigen::MatrixXd::Identity(nx, nx);
        for (int i = 1; i < nm; ++i) {
            T(kStates * i, 0) = -1.0;
            Tinv(kStates * i, 0) = 1.0;
        }
        const Eigen::MatrixXd At = T * A * Tinv;
        A = At.bottomRightCorner(nx - 1, nx - 1);
        const std::string ref = labels[0];
        labels.erase(labels.begin());
        for (int i = 1; i < nm; ++i) labels[kStates * i - 1] += "-" + ref;
    }
    return {std::move(A), std::move(labels)};
}

double damping_ratio(double sigma, double omega) { return -sigma / std::hypot(sigma, omega); }

ModeSet eigenmodes(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols() || A.rows() == 0) throw invalid_error("eigenmodes needs a nonempty square matrix");
    if (!A.allFinite()) throw invalid_error("eigenmodes needs a finite matrix");
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    if (es.info() != Eigen::Success) throw numerical_error("eigenvalue iteration did not converge");
    ModeSet out;
    for (const auto& lambda : es.eigenvalues()) {
        if (lambda.imag() < 0.0) continue;
        out.modes.push_back({lambda.real(), lambda.imag(), damping_ratio(lambda.real(), lambda.imag())});
    }
    std::sort(out.modes.begin(), out.modes.end(), [](const Mode& a, const Mode& b) {
        return a.sigma != b.sigma ? a.sigma > b.sigma : a.omega < b.omega;
    });
    for (int k = 0; k < static_cast<int>(out.modes.size()); ++k) {
        const Mode& m = out.modes[k];
        if (std::hypot(m.sigma, m.omega) < kZeroModeTol) continue;
        if (out.zeta_min_mode < 0 || m.zeta < out.modes[out.zeta_min_mode].zeta) out.zeta_min_mode = k;
    }
    return out;
}

double min_damping(const ModeSet& modes, double zero_mode_tol) {
    double best = std::numeric_limits<double>::infinity();
    for (const Mode& m : modes.modes) {
        if (std::hypot(m.sigma, m.omega) >= zero_mode_tol) best = std::min(best, m.zeta);
    }
    if (std::isinf(best)) throw invalid_error("no modes left after removing zero modes");
    return best;
}

double zeta_min(const NetworkModel& model, const DynamicsData& dyn, const SolvedState& state) {
    return min_damping(eigenmodes(linearize(model, dyn, state).A));
}

Sensitivity damping_sensitivity(const NetworkModel& model, const DynamicsData& dyn, const OperatingPoint& op,
                                int coord, double step) {
    if (coord < 0 || coord >= model.layout().n_pg()) throw invalid_error("sensitivity coordinate is not a PG entry");
    if (!(step > 0.0)) throw invalid_error("sensitivity step must be positive");
    const powerflow::Tolerances tol{1e-11, 1e-6, 50, 10};
    const SolvedState base = powerflow::solve_pf(model, op, false, tol);
    if (!base.converged) throw numerical_error("power flow diverged at the operating point");

    auto evaluate = [&](double delta) -> std::optional<double> {
        OperatingPoint p = op;
        p.x[model.layout().pg_offset() + coord] += delta;
        const SolvedState st = powerflow::solve_pf(model, p, false, tol, &base);
        if (!st.converged) return std::nullopt;
        try {
            return zeta_min(model, dyn, st);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Numerical) return std::nullopt;
            throw;
        }
    };
    const auto plus = evaluate(step);
    const auto minus = evaluate(-step);
    if (plus && minus) return {(*plus - *minus) / (2.0 * step), 2};
    if (!plus && !minus) throw numerical_error("both perturbed power flows diverged");
    const double z0 = zeta_min(model, dyn, base);
    if (plus) return {(*plus - z0) / step, 1};
    return {(z0 - *minus) / step, 1};
}

}  // namespace dsagen::smallsignal
