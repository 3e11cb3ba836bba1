#include "dsagen/netmodel.hpp"

#include "dsagen/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <regex>
#include <sstream>

namespace dsagen::netmodel {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Angle-difference bounds wider than +/-90 deg are replaced by +/-60 deg so the
// cosine/sine envelopes of the relaxation stay valid.
constexpr double kDefaultAngleBound = 60.0 * kDeg;

using Row = std::vector<double>;

std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    for (char c : text) {
        if (c == '\n') {
            in_comment = false;
            out.push_back(c);
        } else if (c == '%') {
            in_comment = true;
        } else if (!in_comment) {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<Row> parse_table(const std::string& text, const std::string& name, bool required) {
    const std::regex head("mpc\\." + name + "\\s*=\\s*\\[");
    std::smatch m;
    if (!std::regex_search(text, m, head)) {
        if (required) throw parse_error("missing table 'mpc." + name + "'");
        return {};
    }
    const auto begin = static_cast<std::size_t>(m.position(0) + m.length(0));
    const auto end = text.find(']', begin);
    if (end == std::string::npos) throw parse_error("table '" + name + "' is not closed by ']'");
    const std::string body = text.substr(begin, end - begin);

    std::vector<Row> rows;
    std::string chunk;
    auto flush = [&] {
        std::string tokens = chunk;
        chunk.clear();
        std::replace(tokens.begin(), tokens.end(), ',', ' ');
        std::istringstream is(tokens);
        Row row;
        std::string tok;
        while (is >> tok) {
            try {
                std::size_t used = 0;
                double v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                row.push_back(v);
            } catch (const std::exception&) {
                throw parse_error("table '" + name + "' row " + std::to_string(rows.size() + 1) +
                                  ": cannot parse value '" + tok + "'");
            }
        }
        if (!row.empty()) rows.push_back(std::move(row));
    };
    for (char c : body) {
        if (c == ';' || c == '\n') {
            flush();
        } else {
            chunk.push_back(c);
        }
    }
    flush();
    return rows;
}

void require_columns(const Row& row, std::size_t n, const std::string& table, std::size_t index) {
    if (row.size() < n) {
        throw parse_error("table '" + table + "' row " + std::to_string(index + 1) + ": expected at least " +
                          std::to_string(n) + " columns, found " + std::to_string(row.size()));
    }
}

std::string fmt_row(const std::string& table, std::size_t i) {
    return "table '" + table + "' row " + std::to_string(i + 1);
}

std::vector<std::vector<int>> adjacency(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    return adj;
}

}  // namespace

// ---------------------------------------------------------------------------
// InputLayout

InputLayout::InputLayout(std::vector<int> nonslack_gens, int n_gens, std::vector<std::string> names)
    : nonslack_gens_(std::move(nonslack_gens)), n_gens_(n_gens), names_(std::move(names)) {}

int InputLayout::pg_coordinate(int gen) const {
    auto it = std::find(nonslack_gens_.begin(), nonslack_gens_.end(), gen);
    return it == nonslack_gens_.end() ? -1 : static_cast<int>(it - nonslack_gens_.begin());
}

std::uint64_t InputLayout::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& name : names_) {
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0x1f;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// NetworkModel

NetworkModel::NetworkModel(double base_mva, std::vector<Bus> buses, std::vector<Generator> generators,
                           std::vector<Line> lines, std::vector<LoadPoint> loads)
    : base_mva_(base_mva),
      buses_(std::move(buses)),
      generators_(std::move(generators)),
      lines_(std::move(lines)),
      loads_(std::move(loads)) {
    if (!(base_mva_ > 0.0)) throw invalid_error("base MVA must be positive");
    if (buses_.empty()) throw invalid_error("network has no buses");

    std::vector<int> order(buses_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return buses_[a].id < buses_[b].id; });
    for (std::size_t k = 1; k < order.size(); ++k) {
        if (buses_[order[k]].id == buses_[order[k - 1]].id) {
            throw parse_error("duplicate bus id " + std::to_string(buses_[order[k]].id));
        }
    }
    for (int i : order) {
        bus_ids_sorted_.push_back(buses_[i].id);
        bus_pos_sorted_.push_back(i);
    }

    int n_slack = 0;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const Bus& b = buses_[i];
        if (b.kind == BusKind::Slack) {
            ++n_slack;
            slack_bus_ = static_cast<int>(i);
        }
        if (!(b.v_min > 0.0) || b.v_min > b.v_max) {
            throw invalid_error("bus " + std::to_string(b.id) + ": require 0 < v_min <= v_max");
        }
    }
    if (n_slack > 1) throw parse_error("multiple slack buses");
    if (n_slack == 0) throw parse_error("missing slack bus");

    gens_at_bus_.assign(buses_.size(), {});
    for (std::size_t g = 0; g < generators_.size(); ++g) {
        const Generator& gen = generators_[g];
        if (gen.p_min > gen.p_max) throw invalid_error("generator " + std::to_string(gen.id) + ": p_min > p_max");
        if (gen.q_min > gen.q_max) throw invalid_error("generator " + std::to_string(gen.id) + ": q_min > q_max");
        gens_at_bus_[bus_index(gen.bus_id)].push_back(static_cast<int>(g));
    }
    if (gens_at_bus_[slack_bus_].empty()) throw parse_error("slack bus has no in-service generator");
    slack_gen_ = gens_at_bus_[slack_bus_].front();

    load_at_bus_.assign(buses_.size(), -1);
    for (std::size_t l = 0; l < loads_.size(); ++l) {
        const int bi = bus_index(loads_[l].bus_id);
        if (load_at_bus_[bi] >= 0) throw parse_error("two loads at bus " + std::to_string(loads_[l].bus_id));
        load_at_bus_[bi] = static_cast<int>(l);
    }

    std::vector<std::pair<int, int>> edges;
    for (const Line& line : lines_) {
        if (std::abs(line.z) == 0.0) {
            throw invalid_error("line " + std::to_string(line.from_bus) + "-" + std::to_string(line.to_bus) +
                                ": zero series impedance");
        }
        if (!(line.s_max > 0.0)) throw invalid_error("line rating must be positive");
        if (!(line.theta_min < line.theta_max)) throw invalid_error("line angle bounds must satisfy min < max");
        edges.emplace_back(bus_index(line.from_bus), bus_index(line.to_bus));
    }

    // Connectivity: every bus must reach the slack bus.
    auto adj = adjacency(n_buses(), edges);
    std::vector<char> seen(buses_.size(), 0);
    std::queue<int> q;
    q.push(slack_bus_);
    seen[slack_bus_] = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                q.push(v);
            }
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw invalid_error("islanded network");

    std::vector<int> nonslack;
    std::vector<std::string> names;
    for (int g = 0; g < n_gens(); ++g) {
        if (g != slack_gen_) {
            nonslack.push_back(g);
            names.push_back("PG_" + std::to_string(generators_[g].id));
        }
    }
    for (const auto& gen : generators_) names.push_back("VG_" + std::to_string(gen.id));
    for (const auto& load : loads_) names.push_back("PD_" + std::to_string(load.bus_id));
    for (const auto& load : loads_) names.push_back("QD_" + std::to_string(load.bus_id));
    layout_ = InputLayout(std::move(nonslack), n_gens(), std::move(names));

    Y_ = build_admittance(*this);
}

int NetworkModel::bus_index(int bus_id) const {
    auto it = std::lower_bound(bus_ids_sorted_.begin(), bus_ids_sorted_.end(), bus_id);
    if (it == bus_ids_sorted_.end() || *it != bus_id) {
        throw invalid_error("unknown bus id " + std::to_string(bus_id));
    }
    return bus_pos_sorted_[it - bus_ids_sorted_.begin()];
}

// ---------------------------------------------------------------------------
// Parsing

NetworkModel parse_case(std::string_view raw, const CaseOptions& options) {
    const std::string text = strip_comments(raw);

    double base_mva = 100.0;
    {
        std::smatch m;
        const std::regex re("mpc\\.baseMVA\\s*=\\s*([-+0-9.eE]+)");
        if (std::regex_search(text, m, re)) {
            base_mva = std::stod(m[1].str());
        } else {
            throw parse_error("missing 'mpc.baseMVA'");
        }
    }

    const auto bus_rows = parse_table(text, "bus", true);
    const auto gen_rows = parse_table(text, "gen", true);
    const auto branch_rows = parse_table(text, "branch", true);
    const auto cost_rows = parse_table(text, "gencost", false);

    std::vector<Bus> buses;
    std::vector<LoadPoint> loads;
    for (std::size_t i = 0; i < bus_rows.size(); ++i) {
        const Row& r = bus_rows[i];
        require_columns(r, 13, "bus", i);
        Bus b;
        b.id = static_cast<int>(r[0]);
        const int type = static_cast<int>(r[1]);
        if (type == 3) {
            b.kind = BusKind::Slack;
        } else if (type == 1 || type == 2) {
            b.kind = BusKind::Load;  // generator kind assigned below from in-service units
        } else {
            throw parse_error(fmt_row("bus", i) + ": unsupported bus type " + std::to_string(type));
        }
        b.gs = r[4] / base_mva;
        b.bs = r[5] / base_mva;
        b.vm0 = r[7];
        b.va0 = r[8] * kDeg;
        b.v_max = r[11];
        b.v_min = r[12];
        if (r[2] != 0.0 || r[3] != 0.0) {
            loads.push_back({b.id, r[2] * options.load_scale, r[3] * options.load_scale});
        }
        buses.push_back(b);
    }

    std::vector<Generator> gens;
    std::vector<std::size_t> gen_row_of;
    for (std::size_t i = 0; i < gen_rows.size(); ++i) {
        const Row& r = gen_rows[i];
        require_columns(r, 10, "gen", i);
        if (r[7] <= 0.0) continue;  // out of service
        Generator g;
        g.id = static_cast<int>(gens.size()) + 1;
        g.bus_id = static_cast<int>(r[0]);
        g.p0 = r[1];
        g.q0 = r[2];
        g.q_max = r[3];
        g.q_min = r[4];
        g.v_set = r[5];
        g.p_max = r[8];
        g.p_min = r[9];
        gens.push_back(g);
        gen_row_of.push_back(i);
    }
    if (gens.empty()) throw parse_error("no in-service generators");

    for (std::size_t k = 0; k < gens.size(); ++k) {
        const std::size_t row = gen_row_of[k];
        if (cost_rows.empty()) break;
        if (row >= cost_rows.size()) throw parse_error("table 'gencost' has fewer rows than 'gen'");
        const Row& c = cost_rows[row];
        require_columns(c, 4, "gencost", row);
        if (static_cast<int>(c[0]) != 2) throw parse_error(fmt_row("gencost", row) + ": only polynomial (model 2) costs");
        const int n = static_cast<int>(c[3]);
        require_columns(c, 4 + static_cast<std::size_t>(n), "gencost", row);
        if (n > 3) throw parse_error(fmt_row("gencost", row) + ": cost polynomial degree above 2");
        std::vector<double> coeffs(c.begin() + 4, c.begin() + 4 + n);
        while (coeffs.size() < 3) coeffs.insert(coeffs.begin(), 0.0);
        gens[k].cost = {coeffs[0], coeffs[1], coeffs[2]};
    }

    std::vector<Line> lines;
    for (std::size_t i = 0; i < branch_rows.size(); ++i) {
        const Row& r = branch_rows[i];
        require_columns(r, 11, "branch", i);
        if (r[10] <= 0.0) continue;
        Line l;
        l.from_bus = static_cast<int>(r[0]);
        l.to_bus = static_cast<int>(r[1]);
        l.z = {r[2], r[3]};
        l.b_charging = r[4];
        l.s_max = r[5] > 0.0 ? r[5] : std::numeric_limits<double>::infinity();
        l.tap = r[8] != 0.0 ? r[8] : 1.0;
        l.shift = r[9] * kDeg;
        double amin = r.size() > 11 ? r[11] * kDeg : -kDefaultAngleBound;
        double amax = r.size() > 12 ? r[12] * kDeg : kDefaultAngleBound;
        if (amin == 0.0 && amax == 0.0) {
            amin = -kDefaultAngleBound;
            amax = kDefaultAngleBound;
        }
        if (amin <= -std::numbers::pi / 2) amin = -kDefaultAngleBound;
        if (amax >= std::numbers::pi / 2) amax = kDefaultAngleBound;
        l.theta_min = amin;
        l.theta_max = amax;
        if (std::abs(l.z) == 0.0) throw parse_error(fmt_row("branch", i) + ": zero series impedance");
        lines.push_back(l);
    }

    // Bus kinds from in-service generators.
    for (auto& b : buses) {
        if (b.kind == BusKind::Slack) continue;
        const bool has_gen = std::any_of(gens.begin(), gens.end(), [&](const Generator& g) { return g.bus_id == b.id; });
        b.kind = has_gen ? BusKind::Generator : BusKind::Load;
    }

    return NetworkModel(base_mva, std::move(buses), std::move(gens), std::move(lines), std::move(loads));
}

NetworkModel load_case_file(const std::string& path, const CaseOptions& options) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open case file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str(), options);
}

// ---------------------------------------------------------------------------
// Admittance

BranchAdmittance branch_admittance(const Line& line) {
    const Complex ys = 1.0 / line.z;
    const Complex t = std::polar(line.tap, line.shift);
    const Complex ytt = ys + Complex(0.0, line.b_charging / 2.0);
    BranchAdmittance y;
    y.ytt = ytt;
    y.yff = ytt / (line.tap * line.tap);
    y.yft = -ys / std::conj(t);
    y.ytf = -ys / t;
    return y;
}

Eigen::MatrixXcd build_admittance(const NetworkModel& model) {
    const int n = model.n_buses();
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const Line& line : model.lines()) {
        const int f = model.bus_index(line.from_bus);
        const int t = model.bus_index(line.to_bus);
        const BranchAdmittance y = branch_admittance(line);
        Y(f, f) += y.yff;
        Y(f, t) += y.yft;
        Y(t, f) += y.ytf;
        Y(t, t) += y.ytt;
    }
    for (int i = 0; i < n; ++i) Y(i, i) += Complex(model.buses()[i].gs, model.buses()[i].bs);
    return Y;
}

// ---------------------------------------------------------------------------
// Encoding

OperatingPoint encode(const NetworkModel& model, const Setpoints& v) {
    const InputLayout& lay = model.layout();
    if (static_cast<int>(v.pg.size()) != lay.n_pg() || static_cast<int>(v.vg.size()) != lay.n_vg() ||
        static_cast<int>(v.pd.size()) != lay.n_loads() || static_cast<int>(v.qd.size()) != lay.n_loads()) {
        throw invalid_error("setpoint block sizes do not match the network layout");
    }
    OperatingPoint op;
    op.x.resize(lay.dimension());
    int k = 0;
    for (double p : v.pg) op.x[k++] = p;
    for (double p : v.vg) op.x[k++] = p;
    for (double p : v.pd) op.x[k++] = p;
    for (double p : v.qd) op.x[k++] = p;
    return op;
}

OperatingPoint encode(const NetworkModel& model, const Eigen::VectorXd& values) {
    if (values.size() != model.layout().dimension()) {
        throw invalid_error("operating point has length " + std::to_string(values.size()) + ", expected " +
                            std::to_string(model.layout().dimension()));
    }
    return OperatingPoint{values};
}

Setpoints decode(const NetworkModel& model, const OperatingPoint& op) {
    const InputLayout& lay = model.layout();
    if (op.x.size() != lay.dimension()) {
        throw invalid_error("operating point has length " + std::to_string(op.x.size()) + ", expected " +
                            std::to_string(lay.dimension()));
    }
    Setpoints v;
    auto slice = [&](int off, int n) { return std::vector<double>(op.x.data() + off, op.x.data() + off + n); };
    v.pg = slice(lay.pg_offset(), lay.n_pg());
    v.vg = slice(lay.vg_offset(), lay.n_vg());
    v.pd = slice(lay.pd_offset(), lay.n_loads());
    v.qd = slice(lay.qd_offset(), lay.n_loads());
    return v;
}

OperatingPoint nominal_point(const NetworkModel& model) {
    const double base = model.base_mva();
    Setpoints v;
    for (int k = 0; k < model.layout().n_pg(); ++k) {
        v.pg.push_back(model.generators()[model.layout().pg_generator(k)].p0 / base);
    }
    for (const auto& g : model.generators()) v.vg.push_back(g.v_set);
    for (const auto& l : model.loads()) v.pd.push_back(l.p_nominal / base);
    for (const auto& l : model.loads()) v.qd.push_back(l.q_nominal / base);
    return encode(model, v);
}

bool Box::contains(const Eigen::VectorXd& x, double tol) const {
    return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
}

Eigen::VectorXd Box::clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

Box input_box(const NetworkModel& model, double load_range) {
    const InputLayout& lay = model.layout();
    const double base = model.base_mva();
    Box box{Eigen::VectorXd(lay.dimension()), Eigen::VectorXd(lay.dimension())};
    for (int k = 0; k < lay.n_pg(); ++k) {
        const auto& g = model.generators()[lay.pg_generator(k)];
        box.lower[lay.pg_offset() + k] = g.p_min / base;
        box.upper[lay.pg_offset() + k] = g.p_max / base;
    }
    for (int g = 0; g < model.n_gens(); ++g) {
        const Bus& b = model.buses()[model.bus_index(model.generators()[g].bus_id)];
        box.lower[lay.vg_offset() + g] = b.v_min;
        box.upper[lay.vg_offset() + g] = b.v_max;
    }
    for (int l = 0; l < model.n_loads(); ++l) {
        const auto& load = model.loads()[l];
        const double p = load.p_nominal / base;
        const double q = load.q_nominal / base;
        const double a = p * (1.0 - load_range), b = p * (1.0 + load_range);
        const double c = q * (1.0 - load_range), d = q * (1.0 + load_range);
        box.lower[lay.pd_offset() + l] = std::min(a, b);
        box.upper[lay.pd_offset() + l] = std::max(a, b);
        box.lower[lay.qd_offset() + l] = std::min(c, d);
        box.upper[lay.qd_offset() + l] = std::max(c, d);
    }
    return box;
}

}  // namespace dsagen::netmodel
