#include "dsagen/config.hpp"

#include "dsagen/error.hpp"

#include <toml.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dsagen::config {

namespace {

namespace fs = std::filesystem;

std::string where(const toml::node& n) {
    const auto& src = n.source();
    return " (line " + std::to_string(src.begin.line) + ")";
}

double as_double(const std::string& key, const toml::node& n) {
    if (auto v = n.value_exact<double>()) return *v;
    if (auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
    throw config_error("config: '" + key + "' must be a number" + where(n));
}

std::int64_t as_int(const std::string& key, const toml::node& n) {
    if (auto v = n.value_exact<std::int64_t>()) return *v;
    throw config_error("config: '" + key + "' must be an integer" + where(n));
}

std::string as_string(const std::string& key, const toml::node& n) {
    if (auto v = n.value_exact<std::string>()) return *v;
    throw config_error("config: '" + key + "' must be a string" + where(n));
}

template <std::size_t N>
std::array<double, N> as_array(const std::string& key, const toml::node& n) {
    const auto* arr = n.as_array();
    if (!arr || arr->size() != N) {
        throw config_error("config: '" + key + "' must be an array of " + std::to_string(N) + " numbers" + where(n));
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = as_double(key, *arr->get(i));
    return out;
}

int as_int32(const std::string& key, const toml::node& n) {
    const auto v = as_int(key, n);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw config_error("config: '" + key + "' is out of range" + where(n));
    }
    return static_cast<int>(v);
}

using Setter = std::function<void(RunConfig&, const std::string&, const toml::node&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto num = [&](const char* k, double RunConfig::*f) {
            t[k] = [f](RunConfig& c, const std::string& key, const toml::node& n) { c.*f = as_double(key, n); };
        };
        auto integer = [&](const char* k, int RunConfig::*f) {
            t[k] = [f](RunConfig& c, const std::string& key, const toml::node& n) { c.*f = as_int32(key, n); };
        };
        auto str = [&](const char* k, std::string RunConfig::*f) {
            t[k] = [f](RunConfig& c, const std::string& key, const toml::node& n) { c.*f = as_string(key, n); };
        };
        str("case_file", &RunConfig::case_file);
        str("dynamics_file", &RunConfig::dynamics_file);
        num("load_scale", &RunConfig::load_scale);
        num("load_range", &RunConfig::load_range);
        integer("N1", &RunConfig::N1);
        num("tau", &RunConfig::tau);
        integer("eta", &RunConfig::eta);
        integer("obbt_iters", &RunConfig::obbt_iters);
        num("conic_tol", &RunConfig::conic_tol);
        integer("hr_burn_in", &RunConfig::hr_burn_in);
        integer("hr_thinning", &RunConfig::hr_thinning);
        integer("volume_samples", &RunConfig::volume_samples);
        num("gamma", &RunConfig::gamma);
        num("beta", &RunConfig::beta);
        t["epsilons"] = [](RunConfig& c, const std::string& k, const toml::node& n) { c.epsilons = as_array<4>(k, n); };
        t["distances"] = [](RunConfig& c, const std::string& k, const toml::node& n) { c.distances = as_array<3>(k, n); };
        integer("kappa_max", &RunConfig::kappa_max);
        integer("kappa_hic", &RunConfig::kappa_hic);
        integer("N2", &RunConfig::N2);
        t["seed"] = [](RunConfig& c, const std::string& k, const toml::node& n) {
            const auto v = as_int(k, n);
            if (v < 0) throw config_error("config: 'seed' must be non-negative" + where(n));
            c.seed = static_cast<std::uint64_t>(v);
        };
        num("discretization_mw", &RunConfig::discretization_mw);
        str("bench", &RunConfig::bench);
        integer("n_init", &RunConfig::n_init);
        integer("n", &RunConfig::n);
        num("s_scale", &RunConfig::s_scale);
        integer("max_depth", &RunConfig::max_depth);
        num("ccp_alpha", &RunConfig::ccp_alpha);
        num("train_fraction", &RunConfig::train_fraction);
        integer("folds", &RunConfig::folds);
        str("out_dir", &RunConfig::out_dir);
        integer("workers", &RunConfig::workers);
        return t;
    }();
    return table;
}

void apply_table(RunConfig& cfg, const toml::table& tbl) {
    for (const auto& [key, node] : tbl) {
        const std::string k(key.str());
        const auto it = setters().find(k);
        if (it == setters().end()) throw config_error("config: unknown key '" + k + "'" + where(node));
        it->second(cfg, k, node);
    }
}

toml::table parse_table(const std::string& text, const std::string& origin) {
    try {
        return toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config: " << e.description() << " (" << origin << " line " << e.source().begin.line << ")";
        throw config_error(msg.str());
    }
}

}  // namespace

void RunConfig::validate() const {
    if (case_file.empty()) throw config_error("config: 'case_file' is required");
    if (!(load_scale > 0.0)) throw config_error("config: 'load_scale' must be positive");
    if (!(load_range >= 0.0 && load_range < 1.0)) throw config_error("config: 'load_range' must lie in [0, 1)");
    if (N1 < 0 || eta < 1 || obbt_iters < 0 || volume_samples < 1 || hr_burn_in < 0 || hr_thinning < 1) {
        throw config_error("config: polytope settings out of range");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw config_error("config: 'tau' must lie in (0, 1)");
    if (!(conic_tol > 0.0)) throw config_error("config: 'conic_tol' must be positive");
    security().validate();
    walk().validate();
    if (N2 < 1) throw config_error("config: 'N2' must be at least 1");
    if (bench != "lhc" && bench != "importance") throw config_error("config: 'bench' must be lhc or importance");
    if (n < 1 || n_init < 1) throw config_error("config: 'n' and 'n_init' must be at least 1");
    if (!(s_scale > 0.0 && s_scale <= 1.0)) throw config_error("config: 's_scale' must lie in (0, 1]");
    evaluation().tree.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw config_error("config: 'train_fraction' must lie in (0, 1)");
    if (folds < 2) throw config_error("config: 'folds' must be at least 2");
    if (workers < 1) throw config_error("config: 'workers' must be at least 1");
}

std::string RunConfig::resolve(const std::string& path) const {
    const fs::path p(path);
    return p.is_absolute() ? path : (fs::path(base_dir) / p).lexically_normal().string();
}

std::string RunConfig::dynamics_path() const {
    if (!dynamics_file.empty()) return resolve(dynamics_file);
    fs::path p(case_path());
    return p.replace_extension(".dyn.json").string();
}

std::string RunConfig::out_path(const std::string& name) const { return (fs::path(resolve(out_dir)) / name).string(); }

dataset::SecuritySpec RunConfig::security() const { return {gamma, beta}; }

walker::DWConfig RunConfig::walk() const {
    walker::DWConfig w;
    w.epsilons = epsilons;
    w.distances = distances;
    w.kappa_max = kappa_max;
    w.kappa_hic = kappa_hic;
    w.discretization_mw = discretization_mw;
    return w;
}

relaxation::SolveOptions RunConfig::solve() const {
    relaxation::SolveOptions s;
    s.conic_tol = conic_tol;
    return s;
}

relaxation::HyperplaneConfig RunConfig::hyperplanes() const {
    relaxation::HyperplaneConfig h;
    h.N1 = N1;
    h.tau = tau;
    h.eta = eta;
    h.volume_samples = volume_samples;
    h.hit_and_run.burn_in = hr_burn_in;
    h.hit_and_run.thinning = hr_thinning;
    h.seed = seed;
    h.solve = solve();
    return h;
}

samplers::ImportanceConfig RunConfig::importance() const { return {n_init, n, s_scale}; }

mlbench::EvalConfig RunConfig::evaluation() const {
    mlbench::EvalConfig e;
    e.tree.max_depth = max_depth;
    e.tree.ccp_alpha = ccp_alpha;
    e.train_fraction = train_fraction;
    e.folds = folds;
    e.seed = seed;
    return e;
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["case_file"] = case_file;
    j["dynamics_file"] = dynamics_file;
    j["load_scale"] = load_scale;
    j["load_range"] = load_range;
    j["N1"] = N1;
    j["tau"] = tau;
    j["eta"] = eta;
    j["obbt_iters"] = obbt_iters;
    j["conic_tol"] = conic_tol;
    j["hr_burn_in"] = hr_burn_in;
    j["hr_thinning"] = hr_thinning;
    j["volume_samples"] = volume_samples;
    j["gamma"] = gamma;
    j["beta"] = beta;
    j["epsilons"] = epsilons;
    j["distances"] = distances;
    j["kappa_max"] = kappa_max;
    j["kappa_hic"] = kappa_hic;
    j["N2"] = N2;
    j["seed"] = seed;
    j["discretization_mw"] = discretization_mw;
    j["bench"] = bench;
    j["n_init"] = n_init;
    j["n"] = n;
    j["s_scale"] = s_scale;
    j["max_depth"] = max_depth;
    j["ccp_alpha"] = ccp_alpha;
    j["train_fraction"] = train_fraction;
    j["folds"] = folds;
    j["out_dir"] = out_dir;
    j["workers"] = workers;
    return j;
}

RunConfig parse_toml(const std::string& text, const std::string& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    apply_table(cfg, parse_table(text, "config"));
    return cfg;
}

RunConfig load_toml(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const fs::path dir = fs::path(path).parent_path();
    return parse_toml(ss.str(), dir.empty() ? "." : dir.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error("override must look like key=value: " + assignment);
    std::string key = assignment.substr(0, eq), value = assignment.substr(eq + 1);
    auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(value);
    if (!setters().count(key)) throw config_error("config: unknown key '" + key + "'");
    toml::table t;
    try {
        t = toml::parse(key + " = " + value);
    } catch (const toml::parse_error&) {
        toml::table s;
        s.insert(key, value);
        t = std::move(s);
    }
    apply_table(cfg, t);
}

void apply_environment(RunConfig& cfg) {
    const char* s = std::getenv("DSAGEN_SEED");
    if (!s || !*s) return;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0' || errno != 0 || s[0] == '-') throw config_error(std::string("DSAGEN_SEED is not a seed: ") + s);
    cfg.seed = v;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dsagen::config
