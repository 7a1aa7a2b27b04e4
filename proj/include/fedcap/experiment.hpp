#pragma once

#include "fedcap/aggregation.hpp"
#include "fedcap/config.hpp"
#include "fedcap/report.hpp"
#include "fedcap/server.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace fedcap {

/// Population, data, and initial model derived from a config.
struct Setup {
    Federation federation;
    std::vector<ClientShard> shards;
    Batch root_shard;  // FLTrust trust root, never given to clients
    ParamVector initial_model;
};

Setup build_setup(const ExperimentConfig& cfg);

struct RunResult {
    std::vector<RoundReport> reports;
    std::set<ClientId> malicious;
    std::set<ClientId> blacklist;
    std::size_t num_clients = 0;
    ServerState final_state;  // baselines only fill global_model and round
};

using RoundSink = std::function<void(const RoundReport&)>;

/// Runs the configured method for cfg.rounds rounds without touching disk.
RunResult simulate(const ExperimentConfig& cfg, const RoundSink& sink = {});

/// Baseline server rule for one round, built from the config. `server_update`
/// is only consulted by FLTrust.
Aggregator make_aggregator(const ExperimentConfig& cfg, std::uint64_t round_seed,
                           const ParamVector* server_update);

struct RunOptions {
    bool force = false;
    bool export_shards = false;
};

/// simulate() plus artifacts in cfg.output_dir:
///   rounds.csv, summary.json, config.ini, state.fcap, state.json [, shards.csv]
/// Refuses to touch a directory that already holds artifacts unless forced.
RunResult run(const ExperimentConfig& cfg, const RunOptions& opts = {});

std::string rounds_csv_header();
void write_round_rows(std::ostream& out, const RoundReport& report);

/// Summary document for a finished run (the content of summary.json).
std::string summary_json(const ExperimentConfig& cfg, const RunResult& result);

/// 64-bit FNV-1a of the canonical config text without the output directory,
/// as 16 hex digits.
std::string config_digest(const ExperimentConfig& cfg);

struct SweepPoint {
    std::vector<std::pair<std::string, std::string>> overrides;
    std::filesystem::path output_dir;
};

/// Cartesian product of the grid, in grid order with the last key varying
/// fastest. An empty grid yields the base point alone.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, const SweepGrid& grid);

/// One run per grid point plus sweep_index.csv under base.output_dir.
std::vector<SweepPoint> sweep(const ExperimentConfig& base, const SweepGrid& grid,
                              const RunOptions& opts = {});

/// Long-format (run,round,metric,value) rows merged from each run's rounds.csv.
void export_plotdata(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out);

}  // namespace fedcap
