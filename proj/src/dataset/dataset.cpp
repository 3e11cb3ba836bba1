#include "dsagen/dataset.hpp"

#include "dsagen/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace dsagen::dataset {

namespace {

const char* const kFlagColumns[] = {"converged", "feasible", "zeta", "stable", "secure", "in_hic", "source", "seed"};

std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_flag(const std::string& s, const char* column) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw parse_error(std::string("dataset: bad flag in column ") + column + ": '" + s + "'");
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw parse_error("dataset: bad number '" + s + "'");
    return v;
}

}  // namespace

void SecuritySpec::validate() const {
    if (!(beta > 0.0 && beta < gamma)) throw config_error("security spec needs 0 < beta < gamma");
}

std::string to_string(Source s) {
    switch (s) {
        case Source::DW: return "dw";
        case Source::LHC: return "lhc";
        case Source::Importance: return "importance";
        case Source::Projection: return "projection";
    }
    return "?";
}

Source parse_source(const std::string& s) {
    if (s == "dw") return Source::DW;
    if (s == "lhc") return Source::LHC;
    if (s == "importance") return Source::Importance;
    if (s == "projection") return Source::Projection;
    throw parse_error("unknown sample source '" + s + "'");
}

LabeledSample label(const RawResult& r, const SecuritySpec& spec, std::int64_t id) {
    LabeledSample s;
    s.id = id;
    s.x = r.x;
    s.converged = r.converged;
    s.feasible = r.converged && r.feasible;
    s.zeta = r.converged ? r.zeta : std::nullopt;
    s.stable = s.zeta && *s.zeta > 0.0;
    s.secure = s.feasible && s.zeta && spec.secure_damping(*s.zeta);
    s.in_hic = s.zeta && spec.in_hic(*s.zeta);
    s.source = r.source;
    s.seed = r.seed;
    return s;
}

void Dataset::renumber() {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].id = static_cast<std::int64_t>(i);
}

Dataset make_dataset(std::vector<std::string> names, const std::vector<RawResult>& raw, const SecuritySpec& spec) {
    Dataset d;
    d.names = std::move(names);
    d.rows.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) d.rows.push_back(label(raw[i], spec, static_cast<std::int64_t>(i)));
    return d;
}

namespace {

/// Partial Fisher-Yates; the chosen set is then restored to row order by the caller.
std::vector<std::size_t> pick(std::vector<std::size_t> pool, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> u(i, pool.size() - 1);
        std::swap(pool[i], pool[u(rng)]);
    }
    pool.resize(k);
    return pool;
}

Dataset subset(const Dataset& d, std::vector<std::size_t> chosen) {
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.names = d.names;
    for (std::size_t i : chosen) out.rows.push_back(d.rows[i]);
    return out;
}

}  // namespace

Dataset rebalance(const Dataset& d, int n, RebalanceMode mode, std::uint64_t seed) {
    if (n < 0) throw invalid_error("rebalance size must be non-negative");
    if (mode == RebalanceMode::BalancedSecure) return resample_with_share(d, n, 0.5, seed);
    if (static_cast<std::size_t>(n) > d.rows.size()) {
        throw data_error("rebalance: requested " + std::to_string(n) + " rows but the dataset has " +
                         std::to_string(d.rows.size()));
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> all(d.rows.size());
    std::iota(all.begin(), all.end(), 0);
    return subset(d, pick(std::move(all), n, rng));
}

Dataset resample_with_share(const Dataset& d, int n, double secure_share, std::uint64_t seed) {
    if (n < 0) throw invalid_error("rebalance size must be non-negative");
    if (!(secure_share >= 0.0 && secure_share <= 1.0)) throw invalid_error("secure share must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> sec, insec;
    for (std::size_t i = 0; i < d.rows.size(); ++i) (d.rows[i].secure ? sec : insec).push_back(i);
    const auto ns = static_cast<std::size_t>(secure_share * n), ni = static_cast<std::size_t>(n) - ns;
    if (sec.size() < ns || insec.size() < ni) {
        throw data_error("rebalance: class exhausted (secure " + std::to_string(sec.size()) + "/" +
                         std::to_string(ns) + ", insecure " + std::to_string(insec.size()) + "/" +
                         std::to_string(ni) + ")");
    }
    auto chosen = pick(std::move(sec), ns, rng);
    const auto b = pick(std::move(insec), ni, rng);
    chosen.insert(chosen.end(), b.begin(), b.end());
    return subset(d, std::move(chosen));
}

DatasetStats stats(const Dataset& d) {
    if (d.rows.empty()) throw data_error("stats of an empty dataset");
    DatasetStats s;
    s.n = static_cast<std::int64_t>(d.rows.size());
    std::int64_t f = 0, st = 0, se = 0, h = 0;
    for (const auto& r : d.rows) {
        f += r.feasible;
        st += r.stable;
        se += r.secure;
        h += r.in_hic;
    }
    const double n = static_cast<double>(s.n);
    s.feasible = f / n;
    s.stable = st / n;
    s.secure = se / n;
    s.hic = h / n;
    return s;
}

std::string stats_json(const DatasetStats& s) {
    nlohmann::ordered_json j;
    j["n"] = s.n;
    j["feasible"] = s.feasible;
    j["stable"] = s.stable;
    j["secure"] = s.secure;
    j["hic"] = s.hic;
    return j.dump(2);
}

void write_csv(const Dataset& d, std::ostream& out) {
    out << "id";
    for (const auto& n : d.names) out << ',' << n;
    for (const char* c : kFlagColumns) out << ',' << c;
    out << '\n';
    for (const auto& r : d.rows) {
        if (r.x.size() != static_cast<Eigen::Index>(d.names.size())) {
            throw invalid_error("dataset row width does not match the header");
        }
        out << r.id;
        for (Eigen::Index i = 0; i < r.x.size(); ++i) out << ',' << fmt9(r.x[i]);
        out << ',' << r.converged << ',' << r.feasible << ',' << (r.zeta ? fmt9(*r.zeta) : "") << ',' << r.stable
            << ',' << r.secure << ',' << r.in_hic << ',' << to_string(r.source) << ',' << r.seed << '\n';
    }
}

void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path);
    write_csv(d, out);
    if (!out) throw config_error("write failed: " + path);
}

Dataset read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("dataset: missing header");
    const auto head = split(line);
    constexpr std::size_t kFlags = std::size(kFlagColumns);
    if (head.size() < 1 + kFlags || head[0] != "id") throw parse_error("dataset: malformed header");
    for (std::size_t k = 0; k < kFlags; ++k) {
        if (head[head.size() - kFlags + k] != kFlagColumns[k]) {
            throw parse_error(std::string("dataset: missing column ") + kFlagColumns[k]);
        }
    }
    Dataset d;
    d.names.assign(head.begin() + 1, head.end() - kFlags);
    const std::size_t nx = d.names.size();
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != head.size()) {
            throw parse_error("dataset: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(head.size()));
        }
        LabeledSample r;
        r.id = std::stoll(cells[0]);
        r.x.resize(static_cast<Eigen::Index>(nx));
        for (std::size_t i = 0; i < nx; ++i) r.x[static_cast<Eigen::Index>(i)] = parse_double(cells[1 + i]);
        const auto* f = &cells[1 + nx];
        r.converged = parse_flag(f[0], "converged");
        r.feasible = parse_flag(f[1], "feasible");
        if (!f[2].empty()) r.zeta = parse_double(f[2]);
        r.stable = parse_flag(f[3], "stable");
        r.secure = parse_flag(f[4], "secure");
        r.in_hic = parse_flag(f[5], "in_hic");
        r.source = parse_source(f[6]);
        r.seed = std::stoull(f[7]);
        d.rows.push_back(std::move(r));
    }
    return d;
}

Dataset read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open dataset " + path);
    return read_csv(in);
}

}  // namespace dsagen::dataset
