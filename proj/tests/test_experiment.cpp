#include "doctest.h"

#include "fedcap/errors.hpp"
#include "fedcap/experiment.hpp"
#include "fedcap/rng.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace fedcap;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.dataset.num_classes = 4;
    cfg.dataset.input_dim = 6;
    cfg.dataset.samples_per_client = 40;
    cfg.plan.num_clients = 6;
    cfg.hidden_dim = 4;
    cfg.rounds = 3;
    cfg.local.epochs = 1;
    cfg.output_dir = out;
    return cfg;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "fedcap_test_experiment" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("build_setup is deterministic and the attack seed leaves data alone") {
    ExperimentConfig cfg = small_config("unused");
    cfg.attack.kind = AttackKind::sf;
    cfg.attack.malicious_fraction = 0.34;
    const Setup a = build_setup(cfg);
    const Setup b = build_setup(cfg);
    CHECK(a.initial_model == b.initial_model);
    CHECK(a.federation.malicious == b.federation.malicious);
    CHECK(a.federation.malicious.size() == 3);

    ExperimentConfig other = cfg;
    other.attack_seed = 12345;
    const Setup c = build_setup(other);
    for (std::size_t k = 0; k < a.shards.size(); ++k) {
        CHECK(a.shards[k].train_indices == c.shards[k].train_indices);
        CHECK(a.shards[k].test_indices == c.shards[k].test_indices);
    }
    CHECK(a.initial_model == c.initial_model);
}

TEST_CASE("label flipping clients train on flipped labels") {
    ExperimentConfig cfg = small_config("unused");
    cfg.attack.kind = AttackKind::lf;
    cfg.attack.malicious_fraction = 0.34;
    const Setup s = build_setup(cfg);
    for (const auto& client : s.federation.clients) {
        const auto& shard = s.shards[static_cast<std::size_t>(client.id)];
        for (std::size_t i = 0; i < client.train.size(); ++i) {
            const int expected = s.federation.is_malicious(client.id) ? (shard.train.labels[i] + 1) % 4
                                                                      : shard.train.labels[i];
            CHECK(client.train.labels[i] == expected);
        }
        CHECK(client.test.labels == shard.test.labels);
    }
}

TEST_CASE("mean with one client follows that client's local trajectory") {
    ExperimentConfig cfg = small_config("unused");
    cfg.method = Method::mean;
    cfg.plan.scheme = PartitionScheme::iid;
    cfg.plan.num_clients = 1;
    cfg.rounds = 4;
    const RunResult r = simulate(cfg);
    const Setup s = build_setup(cfg);
    ParamVector w = s.initial_model;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        w = local_sgd(s.federation.arch, s.federation.clients[0].train, w, cfg.local,
                      derive_seed(cfg.seed, Stream::batching, t, 0));
    }
    CHECK(r.final_state.global_model == w);
}

TEST_CASE("every baseline and wrapper runs") {
    for (auto m : {Method::mean, Method::multikrum, Method::median, Method::rfa, Method::trimmed,
                   Method::clusteredfl, Method::fltrust}) {
        for (auto w : {Wrapper::none, Wrapper::bucketing, Wrapper::gas}) {
            ExperimentConfig cfg = small_config("unused");
            cfg.method = m;
            cfg.wrapper = w;
            cfg.gas_parts = 3;
            cfg.attack.kind = AttackKind::sf;
            cfg.attack.malicious_fraction = 0.2;
            if (w != Wrapper::none && (m == Method::clusteredfl || m == Method::fltrust)) {
                CHECK_THROWS_AS(cfg.validate(), ConfigError);
                continue;
            }
            const RunResult r = simulate(cfg);
            CHECK(r.reports.size() == 3);
            CHECK(r.final_state.global_model.all_finite());
        }
    }
}

TEST_CASE("run writes artifacts and refuses to overwrite") {
    const fs::path dir = scratch("artifacts");
    ExperimentConfig cfg = small_config(dir.string());
    cfg.attack.kind = AttackKind::mr;
    cfg.attack.malicious_fraction = 0.2;
    run(cfg, {false, true});
    for (const char* f : {"rounds.csv", "summary.json", "config.ini", "state.fcap", "state.json", "shards.csv"}) {
        CHECK(fs::exists(dir / f));
    }
    const std::string csv = slurp(dir / "rounds.csv");
    CHECK(csv.rfind("# fedcap-rounds v1\nround,client_id,role,verdict,", 0) == 0);
    CHECK(slurp(dir / "summary.json").find("\"config_digest\"") != std::string::npos);
    CHECK(parse_config(slurp(dir / "config.ini")).rounds == 3);

    CHECK_THROWS_AS(run(cfg), ConfigError);
    CHECK_NOTHROW(run(cfg, {true, false}));
    CHECK(slurp(dir / "rounds.csv") == csv);
}

TEST_CASE("same config and seed give byte-identical artifacts") {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    ExperimentConfig cfg = small_config(a.string());
    cfg.attack.kind = AttackKind::lie;
    cfg.attack.malicious_fraction = 0.34;
    run(cfg);
    cfg.output_dir = b.string();
    run(cfg);
    CHECK(slurp(a / "rounds.csv") == slurp(b / "rounds.csv"));
    CHECK(slurp(a / "state.fcap") == slurp(b / "state.fcap"));
    std::string ja = slurp(a / "summary.json"), jb = slurp(b / "summary.json");
    CHECK(ja == jb);
}

TEST_CASE("sweeps") {
    const fs::path dir = scratch("sweep");
    ExperimentConfig cfg = small_config(dir.string());
    cfg.rounds = 1;
    const SweepGrid grid{{"fedcap.alpha", {"2", "10"}}, {"fedcap.phi", {"0.1", "0.2"}}};
    const auto points = expand_sweep(cfg, grid);
    REQUIRE(points.size() == 4);
    CHECK(points[1].overrides == std::vector<std::pair<std::string, std::string>>{{"fedcap.alpha", "2"}, {"fedcap.phi", "0.2"}});
    sweep(cfg, grid);
    std::set<std::string> dirs, tuples;
    std::ifstream index(dir / "sweep_index.csv");
    std::string line;
    std::getline(index, line);
    CHECK(line == "point,fedcap.alpha,fedcap.phi,output_dir");
    while (std::getline(index, line)) {
        const auto last = line.rfind(',');
        tuples.insert(line.substr(line.find(',') + 1, last - line.find(',') - 1));
        dirs.insert(line.substr(last + 1));
    }
    CHECK(tuples.size() == 4);
    CHECK(dirs.size() == 4);
    for (const auto& d : dirs) CHECK(fs::exists(fs::path(d) / "summary.json"));

    const auto single = expand_sweep(cfg, {});
    REQUIRE(single.size() == 1);
    CHECK(single[0].output_dir == dir);
}

TEST_CASE("plot export") {
    const fs::path dir = scratch("plot");
    ExperimentConfig cfg = small_config(dir.string());
    cfg.rounds = 10;
    cfg.attack.kind = AttackKind::sf;
    cfg.attack.malicious_fraction = 0.2;
    cfg.method = Method::mean;
    run(cfg);
    std::stringstream out;
    export_plotdata({dir}, out);
    std::string line;
    std::getline(out, line);
    CHECK(line == "run,round,metric,value");
    std::size_t rows = 0;
    std::set<std::string> metrics;
    while (std::getline(out, line)) {
        ++rows;
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        const auto c = line.find(',', b + 1);
        metrics.insert(line.substr(b + 1, c - b - 1));
    }
    CHECK(rows == 30);
    CHECK(metrics == std::set<std::string>{"tacc", "update_norm_benign", "update_norm_malicious"});

    const fs::path missing = scratch("does_not_exist");
    try {
        export_plotdata({dir, missing}, out);
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(missing.string()) != std::string::npos);
    }
}

TEST_CASE("summary reports not-applicable metrics as null") {
    ExperimentConfig cfg = small_config("unused");
    cfg.rounds = 2;
    const RunResult r = simulate(cfg);
    const std::string json = summary_json(cfg, r);
    CHECK(json.find("\"fnr\": null") != std::string::npos);
    CHECK(json.find("\"fpr\": 0.0") != std::string::npos);
}
