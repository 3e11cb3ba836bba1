#include "dsagen/pipeline.hpp"

#include "dsagen/error.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#ifndef DSAGEN_VERSION
#define DSAGEN_VERSION "0.0.0"
#endif

namespace dsagen::pipeline {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Write-then-rename so a crash never leaves a half-written artifact.
void write_file(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw config_error("cannot write " + path);
        out << text;
        if (!out) throw config_error("write failed: " + path);
    }
    fs::rename(tmp, path);
}

nlohmann::json parse_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ordered_json entry_json(const walker::TraceEntry& e) {
    ordered_json j;
    j["x"] = vec(e.op.x);
    j["zeta"] = e.zeta;
    j["d"] = e.d;
    return j;
}

walker::TraceEntry entry_from_json(const nlohmann::json& j) {
    return {{from_vec(j.at("x"))}, j.at("zeta").get<double>(), j.at("d").get<double>()};
}

void write_manifest(const config::RunConfig& cfg, const std::string& command, const std::string& path,
                    const std::vector<std::string>& artifacts, std::uint64_t layout_hash) {
    ordered_json m;
    m["tool"] = "dsagen";
    m["version"] = DSAGEN_VERSION;
    m["command"] = command;
    m["case_hash"] = file_hash(cfg.case_path());
    if (fs::exists(cfg.dynamics_path())) m["dynamics_hash"] = file_hash(cfg.dynamics_path());
    m["layout_hash"] = config::hex(layout_hash);
    m["seed"] = cfg.seed;
    m["config_hash"] = config::hex(config_hash(cfg));
    auto settings = cfg.to_json();
    settings.erase("workers");
    settings.erase("out_dir");
    m["config"] = settings;
    ordered_json arts = ordered_json::object();
    for (const auto& a : artifacts) arts[fs::path(a).filename().string()] = file_hash(a);
    m["artifacts"] = arts;
    write_file(path, m.dump(2) + "\n");
}

void write_dataset(const config::RunConfig& cfg, const std::string& name, const dataset::Dataset& d,
                   ordered_json bookkeeping, const std::string& command, std::uint64_t layout_hash) {
    const std::string csv = cfg.out_path(name + ".csv");
    std::ostringstream text;
    dataset::write_csv(d, text);
    write_file(csv, text.str());
    ordered_json st = ordered_json::parse(dataset::stats_json(dataset::stats(d)));
    st["bookkeeping"] = std::move(bookkeeping);
    const std::string stats_path = cfg.out_path(name + "_stats.json");
    write_file(stats_path, st.dump(2) + "\n");
    write_manifest(cfg, command, cfg.out_path(name + "_manifest.json"), {csv, stats_path}, layout_hash);
}

std::string polytope_stem(const config::RunConfig& cfg) { return cfg.out_path("polytope"); }

}  // namespace

CaseData load_case(const config::RunConfig& cfg) {
    netmodel::CaseOptions opt;
    opt.load_scale = cfg.load_scale;
    auto model = netmodel::load_case_file(cfg.case_path(), opt);
    auto dyn = smallsignal::load_dynamics(cfg.dynamics_path(), model);
    return {std::move(model), std::move(dyn)};
}

void save_bounds(const relaxation::TightenedBounds& b, const std::string& path, std::uint64_t layout_hash) {
    ordered_json j;
    j["layout_hash"] = layout_hash;
    j["v_min"] = vec(b.v_min);
    j["v_max"] = vec(b.v_max);
    j["theta_min"] = vec(b.theta_min);
    j["theta_max"] = vec(b.theta_max);
    j["box"]["lower"] = vec(b.box.lower);
    j["box"]["upper"] = vec(b.box.upper);
    write_file(path, j.dump(2) + "\n");
}

relaxation::TightenedBounds load_bounds(const std::string& path, std::uint64_t layout_hash) {
    const auto j = parse_json(path);
    try {
        if (j.at("layout_hash").get<std::uint64_t>() != layout_hash) {
            throw config_error(path + " was written for a different input layout");
        }
        relaxation::TightenedBounds b;
        b.v_min = from_vec(j.at("v_min"));
        b.v_max = from_vec(j.at("v_max"));
        b.theta_min = from_vec(j.at("theta_min"));
        b.theta_max = from_vec(j.at("theta_max"));
        b.box.lower = from_vec(j.at("box").at("lower"));
        b.box.upper = from_vec(j.at("box").at("upper"));
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
}

ordered_json trace_to_json(const walker::WalkTrace& t) {
    ordered_json j;
    j["reason"] = walker::to_string(t.reason);
    j["steps"] = ordered_json::array();
    for (const auto& e : t.steps) j["steps"].push_back(entry_json(e));
    j["hic"] = ordered_json::array();
    for (const auto& e : t.hic) j["hic"].push_back(entry_json(e));
    return j;
}

walker::WalkTrace trace_from_json(const nlohmann::json& j) {
    try {
        walker::WalkTrace t;
        t.reason = walker::parse_termination(j.at("reason").get<std::string>());
        for (const auto& e : j.at("steps")) t.steps.push_back(entry_from_json(e));
        for (const auto& e : j.at("hic")) t.hic.push_back(entry_from_json(e));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("walk checkpoint: ") + e.what());
    }
}

std::uint64_t config_hash(const config::RunConfig& cfg) {
    auto j = cfg.to_json();
    j.erase("workers");
    j.erase("out_dir");
    return config::fnv1a(j.dump());
}

std::string file_hash(const std::string& path) { return config::hex(config::fnv1a(read_file(path))); }

PolytopeSummary cmd_polytope(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const CaseData c = load_case(cfg);
    fs::create_directories(cfg.resolve(cfg.out_dir));
    const auto& lay = c.model.layout();
    PolytopeSummary s;
    log << "obbt: " << cfg.obbt_iters << " passes\n";
    s.bounds = relaxation::obbt(c.model, relaxation::initial_bounds(c.model, cfg.load_range), cfg.obbt_iters,
                                cfg.solve());
    log << "hyperplanes: N1 = " << cfg.N1 << "\n";
    s.run = relaxation::separating_hyperplanes(c.model, s.bounds, cfg.hyperplanes());
    if (s.run.stop == relaxation::StopReason::VolumeStalled) {
        log << "stopped: volume stalled at iteration " << s.run.stop_iteration << "\n";
    } else {
        log << "stopped: iteration limit after " << s.run.iterations << " iterations\n";
    }
    log << "cuts " << s.run.polytope.n_hyperplanes() << ", volume "
        << (s.run.polytope.volume_history.empty() ? 1.0 : s.run.polytope.volume_history.back()) << "\n";
    const std::string stem = polytope_stem(cfg);
    relaxation::save_polytope(s.run.polytope, stem, lay.hash(), lay.names());
    save_bounds(s.bounds, cfg.out_path("bounds.json"), lay.hash());
    write_manifest(cfg, "polytope", cfg.out_path("polytope_manifest.json"),
                   {stem + "_A.csv", stem + "_b.csv", stem + ".json", cfg.out_path("bounds.json")}, lay.hash());
    return s;
}

walker::GenerateResult cmd_generate(const config::RunConfig& cfg, bool resume, std::ostream& log) {
    cfg.validate();
    const CaseData c = load_case(cfg);
    const auto& lay = c.model.layout();
    const std::string stem = polytope_stem(cfg);
    if (!fs::exists(stem + ".json")) throw config_error("no polytope in " + cfg.out_dir + "; run 'dsagen polytope' first");
    const relaxation::Polytope poly = relaxation::load_polytope(stem, lay.hash());
    const relaxation::TightenedBounds bounds = load_bounds(cfg.out_path("bounds.json"), lay.hash());

    // Walk checkpoints are tied to the configuration and the polytope files.
    const fs::path walks = cfg.out_path("walks");
    ordered_json key;
    key["config_hash"] = config::hex(config_hash(cfg));
    key["case_hash"] = file_hash(cfg.case_path());
    key["polytope_hash"] = config::hex(config::fnv1a(read_file(stem + "_A.csv") + read_file(stem + "_b.csv") +
                                                     read_file(cfg.out_path("bounds.json"))));
    const fs::path key_path = walks / "manifest.json";
    if (resume && fs::exists(key_path)) {
        if (ordered_json::parse(read_file(key_path.string())) != key) {
            throw config_error("refusing to resume: " + key_path.string() + " was written for different inputs");
        }
    } else {
        fs::remove_all(walks);
        fs::create_directories(walks);
        write_file(key_path.string(), key.dump(2) + "\n");
    }
    auto walk_path = [&](int j) {
        char name[32];
        std::snprintf(name, sizeof name, "walk_%05d.json", j);
        return (walks / name).string();
    };
    walker::WalkCheckpoint cp;
    cp.load = [&](int j) -> std::optional<walker::WalkTrace> {
        if (!resume || !fs::exists(walk_path(j))) return std::nullopt;
        return trace_from_json(parse_json(walk_path(j)));
    };
    cp.save = [&](int j, const walker::WalkTrace& t) { write_file(walk_path(j), trace_to_json(t).dump() + "\n"); };

    walker::GenerateConfig g;
    g.spec = cfg.security();
    g.dw = cfg.walk();
    g.n2 = cfg.N2;
    g.seed = cfg.seed;
    g.workers = cfg.workers;
    const walker::Context ctx{c.model, c.dynamics, bounds};
    log << "generate: N2 = " << cfg.N2 << ", workers " << cfg.workers << (resume ? ", resuming" : "") << "\n";
    walker::GenerateResult r = walker::generate(ctx, poly, g, &cp);
    log << "init: " << r.init_feasible << " feasible, " << r.init_infeasible << " infeasible, " << r.init_dropped
        << " dropped\n";
    log << "walks: " << r.walks << " (" << r.walks_resumed << " resumed)";
    for (int t = 0; t < 4; ++t) log << ", " << walker::to_string(static_cast<walker::Termination>(t)) << " " << r.terminations[t];
    log << "\nHIC points " << r.hic_points << ", dropped at the final check " << r.final_dropped << "\n";

    ordered_json book;
    book["init_feasible"] = r.init_feasible;
    book["init_infeasible"] = r.init_infeasible;
    book["init_dropped"] = r.init_dropped;
    book["walks"] = r.walks;
    ordered_json term;
    for (int t = 0; t < 4; ++t) term[walker::to_string(static_cast<walker::Termination>(t))] = r.terminations[t];
    book["terminations"] = term;
    book["hic_points"] = r.hic_points;
    book["final_dropped"] = r.final_dropped;
    write_dataset(cfg, "proposed", r.data, book, "generate", lay.hash());
    const auto st = dataset::stats(r.data);
    log << "rows " << st.n << ": feasible " << st.feasible << ", secure " << st.secure << ", HIC " << st.hic << "\n";
    return r;
}

samplers::BenchmarkResult cmd_benchmark(const config::RunConfig& cfg, const std::string& which, std::ostream& log) {
    cfg.validate();
    if (which != "lhc" && which != "importance") throw config_error("benchmark must be lhc or importance");
    const CaseData c = load_case(cfg);
    const auto& lay = c.model.layout();
    fs::create_directories(cfg.resolve(cfg.out_dir));
    const relaxation::TightenedBounds bounds = relaxation::initial_bounds(c.model, cfg.load_range);
    const walker::Context ctx{c.model, c.dynamics, bounds};
    samplers::BenchmarkResult r;
    ordered_json book;
    if (which == "lhc") {
        log << "lhc: n = " << cfg.n << "\n";
        r = samplers::lhc_benchmark(ctx, cfg.security(), cfg.n, cfg.seed, cfg.workers);
    } else {
        log << "importance: n_init = " << cfg.n_init << ", n = " << cfg.n << ", s = " << cfg.s_scale << "\n";
        const auto imp = samplers::importance_benchmark(ctx, cfg.security(), cfg.importance(), cfg.seed, cfg.workers);
        log << "HIC seeds " << imp.seeds << ", rejected draws " << imp.draws.rejected << ", clamped "
            << imp.draws.clamped << "\n";
        book["hic_seeds"] = imp.seeds;
        book["initial_drawn"] = imp.initial.drawn;
        book["rejected_draws"] = imp.draws.rejected;
        book["clamped_draws"] = imp.draws.clamped;
        r = imp.result;
    }
    book["drawn"] = r.drawn;
    book["infeasible"] = r.infeasible;
    book["dropped"] = r.dropped;
    log << "drawn " << r.drawn << ", infeasible " << r.infeasible << ", dropped " << r.dropped << "\n";
    write_dataset(cfg, which, r.data, book, "benchmark " + which, lay.hash());
    return r;
}

void write_scatter(const dataset::Dataset& d, int a, int b, std::ostream& out) {
    out << d.names.at(a) << ',' << d.names.at(b) << ",secure,in_hic\n";
    char buf[64];
    for (const auto& r : d.rows) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g", r.x[a], r.x[b]);
        out << buf << ',' << r.secure << ',' << r.in_hic << '\n';
    }
}

mlbench::EvalReport cmd_train_eval(const config::RunConfig& cfg,
                                   const std::vector<std::pair<std::string, std::string>>& datasets,
                                   std::ostream& log) {
    cfg.validate();
    if (datasets.size() < 2) throw data_error("train-eval needs at least two datasets");
    netmodel::CaseOptions opt;
    opt.load_scale = cfg.load_scale;
    const auto model = netmodel::load_case_file(cfg.case_path(), opt);
    std::vector<mlbench::NamedDataset> sets;
    for (const auto& [name, path] : datasets) {
        sets.push_back({name, dataset::read_csv(cfg.resolve(path))});
        if (sets.back().data.names != model.layout().names()) {
            throw config_error("dataset " + path + " does not match the input layout of " + cfg.case_file);
        }
        log << name << ": " << sets.back().data.rows.size() << " rows\n";
    }
    mlbench::EvalConfig ec = cfg.evaluation();
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].name == "proposed") ec.boundary_source = i;
    }
    const mlbench::EvalReport rep = mlbench::cross_evaluate(sets, cfg.security(), ec);
    fs::create_directories(cfg.resolve(cfg.out_dir));

    std::vector<std::string> artifacts;
    ordered_json j = rep.to_json();
    j["boundary_source"] = sets[ec.boundary_source].name;
    artifacts.push_back(cfg.out_path("eval_report.json"));
    write_file(artifacts.back(), j.dump(2) + "\n");
    std::ostringstream hist;
    rep.write_histogram_csv(hist);
    artifacts.push_back(cfg.out_path("misclassified.csv"));
    write_file(artifacts.back(), hist.str());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        artifacts.push_back(cfg.out_path("tree_" + sets[i].name + ".json"));
        write_file(artifacts.back(), rep.trees[i].to_json().dump(2) + "\n");
        const auto& names = sets[i].data.names;
        std::vector<int> pg;
        for (int k = 0; k < static_cast<int>(names.size()); ++k) {
            if (names[k].rfind("PG_", 0) == 0) pg.push_back(k);
        }
        for (std::size_t a = 0; a < pg.size(); ++a) {
            for (std::size_t b = a + 1; b < pg.size(); ++b) {
                std::ostringstream sc;
                write_scatter(sets[i].data, pg[a], pg[b], sc);
                artifacts.push_back(cfg.out_path("scatter_" + sets[i].name + "_" + names[pg[a]] + "_" + names[pg[b]] + ".csv"));
                write_file(artifacts.back(), sc.str());
            }
        }
    }
    log << "F1 (rows train, columns test):\n";
    for (std::size_t i = 0; i < rep.f1.size(); ++i) {
        log << "  " << rep.train_names[i];
        for (std::size_t k = 0; k < rep.f1[i].size(); ++k) log << "  " << rep.test_names[k] << "=" << rep.f1[i][k];
        log << "\n";
    }
    write_manifest(cfg, "train-eval", cfg.out_path("eval_manifest.json"), artifacts, model.layout().hash());
    return rep;
}

}  // namespace dsagen::pipeline
