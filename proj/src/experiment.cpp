#include "fedcap/experiment.hpp"

#include "fedcap/aggregation.hpp"
#include "fedcap/errors.hpp"
#include "fedcap/metrics.hpp"
#include "fedcap/rng.hpp"

#include <fmt/format.h>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace fedcap {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

Setup build_setup(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t K = cfg.plan.num_clients;
    const std::size_t pool_size = 2 * K * cfg.dataset.samples_per_client + cfg.root_shard_size;
    const Batch pool = generate(cfg.dataset, pool_size, cfg.seed);
    Partition part = partition(pool, cfg.dataset, cfg.plan, cfg.seed);

    Setup setup;
    setup.initial_model = init_params(cfg.arch(), derive_seed(cfg.seed, Stream::init));
    if (cfg.method == Method::fltrust) {
        setup.root_shard = draw_root_shard(pool, part.unused, cfg.root_shard_size,
                                           derive_seed(cfg.seed, Stream::root_shard));
    }

    auto& fed = setup.federation;
    fed.arch = cfg.arch();
    fed.attack = cfg.attack;
    fed.local = cfg.local;
    if (cfg.attack.kind != AttackKind::none) {
        const auto attack_root = cfg.attack_seed.value_or(cfg.seed);
        for (ClientId id : select_malicious(K, cfg.attack.malicious_fraction,
                                            derive_seed(attack_root, Stream::attack))) {
            fed.malicious.insert(id);
        }
    }
    for (const auto& shard : part.clients) {
        ClientRecord rec;
        rec.id = shard.client_id;
        rec.train = shard.train;
        rec.test = shard.test;
        rec.personalized = setup.initial_model;
        if (cfg.attack.kind == AttackKind::lf && fed.is_malicious(rec.id)) {
            rec.train = poison_labels(std::move(rec.train), cfg.dataset.num_classes);
        }
        fed.clients.push_back(std::move(rec));
    }
    setup.shards = std::move(part.clients);
    return setup;
}

Aggregator make_aggregator(const ExperimentConfig& cfg, std::uint64_t round_seed,
                           const ParamVector* server_update) {
    const auto assumed = [cfg](std::size_t n) {
        std::size_t m = cfg.assumed_malicious.value_or(static_cast<std::size_t>(
            std::llround(cfg.attack.malicious_fraction * static_cast<double>(n))));
        return m;
    };
    Aggregator base;
    switch (cfg.method) {
        case Method::mean:
            base = [](const Updates& u) { return agg_mean(u); };
            break;
        case Method::median:
            base = [](const Updates& u) { return agg_median(u); };
            break;
        case Method::trimmed:
            base = [assumed](const Updates& u) {
                const std::size_t q = std::min(assumed(u.size()) / 2, (u.size() - 1) / 2);
                return agg_trimmed_mean(u, q);
            };
            break;
        case Method::multikrum:
            base = [assumed](const Updates& u) {
                if (u.size() < 3) return agg_mean(u);
                const std::size_t m = std::min(assumed(u.size()), u.size() - 3);
                return agg_multikrum(u, m, u.size() - m);
            };
            break;
        case Method::rfa:
            base = [](const Updates& u) { return agg_rfa(u); };
            break;
        case Method::clusteredfl:
            base = [](const Updates& u) { return agg_clusteredfl(u).aggregate; };
            break;
        case Method::fltrust:
            if (server_update == nullptr) throw ConfigError("fltrust needs a server update");
            base = [server_update](const Updates& u) { return agg_fltrust(u, *server_update); };
            break;
        case Method::fedcap:
            throw ConfigError("fedcap does not use a baseline aggregator");
    }
    switch (cfg.wrapper) {
        case Wrapper::none:
            return base;
        case Wrapper::bucketing:
            return [base, s = cfg.bucket_size, round_seed](const Updates& u) {
                return wrap_bucketing(u, s, base, round_seed);
            };
        case Wrapper::gas:
            return [base, p = cfg.gas_parts](const Updates& u) { return wrap_gas(u, p, base); };
    }
    return base;
}

namespace {

std::vector<ClientId> eligible_clients(std::size_t num_clients, const std::set<ClientId>& blacklist) {
    std::vector<ClientId> out;
    for (std::size_t i = 0; i < num_clients; ++i) {
        const auto id = static_cast<ClientId>(i);
        if (!blacklist.contains(id)) out.push_back(id);
    }
    return out;
}

RoundReport baseline_round(const ExperimentConfig& cfg, Setup& setup, ParamVector& global,
                           const std::vector<ClientId>& participants, std::size_t t) {
    auto& fed = setup.federation;
    const std::size_t dim = global.dim();
    RoundReport report;
    report.round = t;

    std::vector<HonestUpload> uploads;
    std::map<ClientId, ClientRoundRow> rows;
    double total_samples = 0.0;
    for (ClientId k : participants) {
        const auto& client = fed.clients[static_cast<std::size_t>(k)];
        const bool bad = fed.is_malicious(k);
        ClientRoundRow row;
        row.id = k;
        row.malicious = bad;
        row.acc_customized = evaluate(fed.arch, client.test, global);
        ParamVector d;
        try {
            const ParamVector local = local_sgd(fed.arch, client.train, global, fed.local,
                                                derive_seed(cfg.seed, Stream::batching, t, 2 * static_cast<std::uint64_t>(k)));
            row.acc_personalized = evaluate(fed.arch, client.test, local);
            d = compute_update(local, global);
        } catch (const NumericalError& e) {
            if (!bad) throw NumericalError(fmt::format("round {}: benign client {}: {}", t, k, e.what()));
            d = ParamVector(dim, std::numeric_limits<double>::infinity());
        }
        total_samples += static_cast<double>(client.num_train_samples());
        uploads.push_back({k, std::move(d), bad});
        rows.emplace(k, row);
    }
    uploads = apply_attack(fed.attack, std::move(uploads));

    Updates updates;
    for (const auto& up : uploads) {
        const double share =
            static_cast<double>(fed.clients[static_cast<std::size_t>(up.id)].num_train_samples()) / total_samples;
        updates.push_back({up.id, up.update, share});
    }

    std::optional<ParamVector> server_update;
    if (cfg.method == Method::fltrust) {
        server_update = compute_update(
            local_sgd(fed.arch, setup.root_shard, global, fed.local,
                      derive_seed(cfg.seed, Stream::root_shard, t + 1)),
            global);
    }
    std::set<ClientId> flagged;
    ParamVector aggregate;
    if (cfg.method == Method::clusteredfl && cfg.wrapper == Wrapper::none) {
        auto res = agg_clusteredfl(updates);
        flagged.insert(res.flagged.begin(), res.flagged.end());
        aggregate = std::move(res.aggregate);
    } else {
        aggregate = make_aggregator(cfg, derive_seed(cfg.seed, Stream::bucketing, t),
                                    server_update ? &*server_update : nullptr)(updates);
    }
    global += aggregate;
    if (!global.all_finite()) {
        throw NumericalError(fmt::format("round {}: aggregated global model is non-finite", t));
    }

    for (const auto& up : uploads) {
        auto& row = rows.at(up.id);
        row.update_norm = norm(up.update);
        row.calibrated_norm = row.update_norm;
        if (cfg.method == Method::clusteredfl) {
            row.verdict = flagged.contains(up.id) ? Verdict::malicious : Verdict::benign;
        }
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace

RunResult simulate(const ExperimentConfig& cfg, const RoundSink& sink) {
    Setup setup = build_setup(cfg);
    auto& fed = setup.federation;
    RunResult result;
    result.num_clients = fed.clients.size();
    result.malicious = fed.malicious;

    if (cfg.method == Method::fedcap) {
        ServerState state = make_initial_state(setup.initial_model);
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            const auto eligible = eligible_clients(result.num_clients, state.blacklist);
            if (eligible.empty()) break;
            const auto participants = sample_participants(eligible, cfg.participation_ratio,
                                                          derive_seed(cfg.seed, Stream::sampling, t));
            auto report = run_round(state, fed, participants, cfg.fedcap, cfg.seed);
            if (sink) sink(report);
            result.reports.push_back(std::move(report));
        }
        result.blacklist = state.blacklist;
        result.final_state = std::move(state);
    } else {
        ParamVector global = setup.initial_model;
        const std::vector<ClientId> everyone = eligible_clients(result.num_clients, {});
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            const auto participants = sample_participants(everyone, cfg.participation_ratio,
                                                          derive_seed(cfg.seed, Stream::sampling, t));
            auto report = baseline_round(cfg, setup, global, participants, t);
            if (sink) sink(report);
            result.reports.push_back(std::move(report));
        }
        result.final_state.global_model = std::move(global);
        result.final_state.round = cfg.rounds;
    }
    return result;
}

std::string rounds_csv_header() {
    return "# fedcap-rounds v1\n"
           "round,client_id,role,verdict,update_norm,calibrated_norm,test_acc_customized,"
           "test_acc_personalized\n";
}

void write_round_rows(std::ostream& out, const RoundReport& report) {
    for (const auto& row : report.rows) {
        out << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", report.round, row.id,
                           row.malicious ? "malicious" : "benign", to_string(row.verdict),
                           row.update_norm, row.calibrated_norm, row.acc_customized,
                           row.acc_personalized);
    }
}

std::string config_digest(const ExperimentConfig& cfg) {
    ExperimentConfig canonical = cfg;
    canonical.output_dir.clear();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_config_text(canonical)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

namespace {

json optional_number(std::optional<double> v) {
    if (!v || !std::isfinite(*v)) return nullptr;
    return *v;
}

std::optional<double> mean_norm(const RoundReport& report, bool malicious) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& row : report.rows) {
        if (row.malicious != malicious) continue;
        s += row.update_norm;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

std::set<ClientId> benign_ids(const RunResult& r) {
    std::set<ClientId> out;
    for (std::size_t i = 0; i < r.num_clients; ++i) {
        if (!r.malicious.contains(static_cast<ClientId>(i))) out.insert(static_cast<ClientId>(i));
    }
    return out;
}

}  // namespace

std::string summary_json(const ExperimentConfig& cfg, const RunResult& result) {
    const auto benign = benign_ids(result);
    const auto counts = confusion(result.malicious, result.blacklist, result.num_clients);
    const auto det = detection_metrics(counts);

    json j;
    j["schema"] = "fedcap-summary v1";
    j["config_digest"] = config_digest(cfg);
    j["seed"] = cfg.seed;
    j["method"] = std::string(to_string(cfg.method));
    j["wrapper"] = std::string(to_string(cfg.wrapper));
    j["attack"] = std::string(to_string(cfg.attack.kind));
    j["knowledge"] = std::string(to_string(cfg.attack.knowledge));
    // LIE/Min-Max/Min-Sum statistics are taken over whatever the adversary sees.
    j["attack_statistics_over"] = cfg.attack.knowledge == Knowledge::full ? "all participants"
                                                                          : "malicious participants";
    j["rounds_completed"] = result.reports.size();
    j["tacc_model"] = cfg.tacc_choice == ModelChoice::best_of_both ? "best"
                      : cfg.tacc_choice == ModelChoice::customized ? "customized"
                                                                   : "personalized";
    j["tacc"] = result.reports.empty() ? json(nullptr)
                                       : json(tacc(result.reports, benign, cfg.tacc_choice));
    j["dacc"] = optional_number(det.dacc);
    j["fpr"] = optional_number(det.fpr);
    j["fnr"] = optional_number(det.fnr);
    j["target_accuracy"] = cfg.target_accuracy;
    const auto r2 = r2acc(result.reports, benign, cfg.tacc_choice, cfg.target_accuracy);
    j["r2acc"] = r2 ? json(*r2) : json(nullptr);
    j["confusion"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn}, {"fn", counts.fn}};
    j["malicious_ids"] = result.malicious;
    j["blacklisted_ids"] = result.blacklist;
    j["exchanged_models"] = result.reports.empty() ? 0 : result.reports.back().exchanged_models;

    json tacc_series_json = json::array();
    json benign_norms = json::array();
    json malicious_norms = json::array();
    for (const auto& r : result.reports) {
        tacc_series_json.push_back(tacc(r, benign, cfg.tacc_choice));
        benign_norms.push_back(optional_number(mean_norm(r, false)));
        malicious_norms.push_back(optional_number(mean_norm(r, true)));
    }
    j["tacc_series"] = tacc_series_json;
    j["norm_series"] = {{"benign", benign_norms}, {"malicious", malicious_norms}};
    return j.dump(2) + "\n";
}

namespace {

const std::vector<std::string> kArtifacts = {"rounds.csv", "summary.json", "config.ini",
                                             "state.fcap", "state.json",   "shards.csv"};

void prepare_output_dir(const fs::path& dir, bool force) {
    fs::create_directories(dir);
    for (const auto& name : kArtifacts) {
        const auto p = dir / name;
        if (!fs::exists(p)) continue;
        if (!force) {
            throw ConfigError(fmt::format("{} already exists; pass --force to overwrite", p.string()));
        }
        fs::remove(p);
    }
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(p, mode);
    if (!out) throw ConfigError(fmt::format("cannot write {}", p.string()));
    return out;
}

void write_checkpoint(const fs::path& dir, const ExperimentConfig& cfg, const RunResult& result) {
    const auto& state = result.final_state;
    {
        auto out = open_out(dir / "state.fcap", std::ios::out | std::ios::binary);
        write_param_vector(out, state.global_model);
        for (const auto& [id, w] : state.recovered_pool) write_param_vector(out, w);
        for (const auto& [id, d] : state.calibrated_pool) write_param_vector(out, d);
    }
    json j;
    j["schema"] = "fedcap-state v1";
    j["method"] = std::string(to_string(cfg.method));
    j["round"] = state.round;
    j["dim"] = state.global_model.dim();
    std::vector<ClientId> ids;
    for (const auto& [id, w] : state.recovered_pool) ids.push_back(id);
    j["pool_ids"] = ids;
    j["record_order"] = {"global_model", "recovered_pool[pool_ids]", "calibrated_pool[pool_ids]"};
    json counts = json::object();
    for (const auto& [id, n] : state.sample_counts) counts[std::to_string(id)] = n;
    j["sample_counts"] = counts;
    j["blacklist"] = state.blacklist;
    auto out = open_out(dir / "state.json");
    out << j.dump(2) << "\n";
}

}  // namespace

RunResult run(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const fs::path dir = cfg.output_dir;
    prepare_output_dir(dir, opts.force);
    {
        auto out = open_out(dir / "config.ini");
        out << to_config_text(cfg);
    }
    auto csv = open_out(dir / "rounds.csv");
    csv << rounds_csv_header();
    RunResult result = simulate(cfg, [&](const RoundReport& r) {
        write_round_rows(csv, r);
        csv.flush();
    });
    csv.close();
    {
        auto out = open_out(dir / "summary.json");
        out << summary_json(cfg, result);
    }
    write_checkpoint(dir, cfg, result);
    if (opts.export_shards) {
        const Setup setup = build_setup(cfg);
        auto out = open_out(dir / "shards.csv");
        export_shards_csv(out, setup.shards);
    }
    return result;
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, const SweepGrid& grid) {
    std::vector<SweepPoint> points;
    std::size_t total = 1;
    for (const auto& [key, values] : grid) total *= values.size();
    if (grid.empty()) {
        points.push_back({{}, fs::path(base.output_dir)});
        return points;
    }
    for (std::size_t idx = 0; idx < total; ++idx) {
        SweepPoint p;
        std::size_t rem = idx;
        std::vector<std::pair<std::string, std::string>> rev;
        for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
            rev.emplace_back(it->first, it->second[rem % it->second.size()]);
            rem /= it->second.size();
        }
        p.overrides.assign(rev.rbegin(), rev.rend());
        p.output_dir = fs::path(base.output_dir) / fmt::format("point_{:03d}", idx);
        points.push_back(std::move(p));
    }
    return points;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, const SweepGrid& grid,
                              const RunOptions& opts) {
    const auto points = expand_sweep(base, grid);
    std::vector<ExperimentConfig> configs;
    for (const auto& p : points) {
        ExperimentConfig cfg = base;
        for (const auto& [k, v] : p.overrides) apply_override(cfg, k, v);
        cfg.output_dir = p.output_dir.string();
        cfg.validate();
        configs.push_back(std::move(cfg));
    }
    const fs::path index_path = fs::path(base.output_dir) / "sweep_index.csv";
    fs::create_directories(base.output_dir);
    if (fs::exists(index_path) && !opts.force) {
        throw ConfigError(fmt::format("{} already exists; pass --force to overwrite", index_path.string()));
    }
    for (const auto& cfg : configs) run(cfg, opts);

    auto out = open_out(index_path);
    out << "point";
    for (const auto& [key, values] : grid) out << ',' << key;
    out << ",output_dir\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        out << i;
        for (const auto& [k, v] : points[i].overrides) out << ',' << v;
        out << ',' << points[i].output_dir.string() << '\n';
    }
    return points;
}

namespace {

struct CsvRow {
    std::size_t round;
    bool malicious;
    double update_norm;
    double acc_customized;
    double acc_personalized;
};

std::vector<CsvRow> read_rounds_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
    std::vector<CsvRow> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw ConfigError(fmt::format("malformed row in {}: {}", path.string(), line));
        rows.push_back({static_cast<std::size_t>(std::stoull(cells[0])), cells[2] == "malicious",
                        std::stod(cells[4]), std::stod(cells[6]), std::stod(cells[7])});
    }
    return rows;
}

}  // namespace

void export_plotdata(const std::vector<fs::path>& run_dirs, std::ostream& out) {
    std::vector<std::string> missing;
    for (const auto& d : run_dirs) {
        if (!fs::exists(d / "rounds.csv")) missing.push_back(d.string());
    }
    if (!missing.empty()) {
        std::string msg = "missing run directories:";
        for (const auto& m : missing) msg += " " + m;
        throw ConfigError(msg);
    }
    out << "run,round,metric,value\n";
    for (const auto& d : run_dirs) {
        const auto name = d.filename().empty() ? d.parent_path().filename().string() : d.filename().string();
        std::map<std::size_t, std::vector<CsvRow>> by_round;
        for (auto& r : read_rounds_csv(d / "rounds.csv")) by_round[r.round].push_back(r);
        for (const auto& [round, rows] : by_round) {
            double acc_c = 0.0, acc_p = 0.0, nb = 0.0, nm = 0.0, norm_b = 0.0, norm_m = 0.0;
            for (const auto& r : rows) {
                if (r.malicious) {
                    norm_m += r.update_norm;
                    nm += 1.0;
                } else {
                    acc_c += r.acc_customized;
                    acc_p += r.acc_personalized;
                    norm_b += r.update_norm;
                    nb += 1.0;
                }
            }
            if (nb > 0.0) {
                out << fmt::format("{},{},tacc,{:.17g}\n", name, round, std::max(acc_c, acc_p) / nb);
                out << fmt::format("{},{},update_norm_benign,{:.17g}\n", name, round, norm_b / nb);
            }
            if (nm > 0.0) {
                out << fmt::format("{},{},update_norm_malicious,{:.17g}\n", name, round, norm_m / nm);
            }
        }
    }
}

}  // namespace fedcap
