#pragma once

// The command-level operations behind the dsagen tool: each reads its inputs
// from the run directory and writes artifacts plus a manifest there.

#include "dsagen/config.hpp"
#include "dsagen/mlbench.hpp"
#include "dsagen/netmodel.hpp"
#include "dsagen/relaxation.hpp"
#include "dsagen/samplers.hpp"
#include "dsagen/smallsignal.hpp"
#include "dsagen/walker.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dsagen::pipeline {

struct CaseData {
    netmodel::NetworkModel model;
    smallsignal::DynamicsData dynamics;
};

CaseData load_case(const config::RunConfig& cfg);

void save_bounds(const relaxation::TightenedBounds& b, const std::string& path, std::uint64_t layout_hash);
relaxation::TightenedBounds load_bounds(const std::string& path, std::uint64_t layout_hash);

nlohmann::ordered_json trace_to_json(const walker::WalkTrace& t);
walker::WalkTrace trace_from_json(const nlohmann::json& j);

/// Hash of the settings that shape results (workers and out_dir excluded).
std::uint64_t config_hash(const config::RunConfig& cfg);

std::string file_hash(const std::string& path);

struct PolytopeSummary {
    relaxation::HyperplaneRun run;
    relaxation::TightenedBounds bounds;
};
PolytopeSummary cmd_polytope(const config::RunConfig& cfg, std::ostream& log);

/// Completed walks are kept under <out>/walks; with resume they are reused
/// when their manifest matches this configuration.
walker::GenerateResult cmd_generate(const config::RunConfig& cfg, bool resume, std::ostream& log);

samplers::BenchmarkResult cmd_benchmark(const config::RunConfig& cfg, const std::string& which, std::ostream& log);

/// Datasets as (name, csv path). The boundary set comes from "proposed" when
/// present, else from the first dataset.
mlbench::EvalReport cmd_train_eval(const config::RunConfig& cfg,
                                   const std::vector<std::pair<std::string, std::string>>& datasets,
                                   std::ostream& log);

/// Generator-pair scatter rows: PG_a, PG_b, secure, in_hic.
void write_scatter(const dataset::Dataset& d, int a, int b, std::ostream& out);

}  // namespace dsagen::pipeline
