#include "doctest.h"
#include "oracles.hpp"

#include "fedcap/data.hpp"
#include "fedcap/errors.hpp"
#include "fedcap/server.hpp"

#include <cmath>
#include <numeric>

using namespace fedcap;

namespace {

double weight_sum(const std::map<ClientId, double>& w) {
    double s = 0.0;
    for (const auto& [id, v] : w) s += v;
    return s;
}

ServerState pool_state(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    ServerState s;
    s.global_model = ParamVector(oracle::random_vector(rng, dim));
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = static_cast<ClientId>(i);
        s.recovered_pool[id] = ParamVector(oracle::random_vector(rng, dim));
        s.calibrated_pool[id] = ParamVector(oracle::random_vector(rng, dim));
        s.sample_counts[id] = 100;
    }
    return s;
}

Federation small_federation(std::size_t num_clients, std::uint64_t seed) {
    DatasetSpec spec;
    spec.num_classes = 4;
    spec.input_dim = 6;
    spec.samples_per_client = 40;
    PartitionPlan plan;
    plan.num_clients = num_clients;
    const Batch pool = generate(spec, 2 * num_clients * 40, seed);
    const Partition p = partition(pool, spec, plan, seed);
    Federation fed;
    fed.arch = ModelArch{6, 4, 4};
    fed.local.epochs = 1;
    for (const auto& c : p.clients) {
        fed.clients.push_back({c.client_id, c.train, c.test, init_params(fed.arch, 1)});
    }
    return fed;
}

}  // namespace

TEST_CASE("collect") {
    ServerState s;
    s.global_model = ParamVector{0.0, 0.0};
    s.calibrated_pool[3] = ParamVector{0.5, 0.25};
    s.recovered_pool[3] = ParamVector{1.0, 1.0};
    CHECK(collect(s, 3, std::nullopt) == ParamVector{0.5, 0.25});
    CHECK(s.exchanged_models == 0);
    CHECK(collect(s, 4, ParamVector{0.1, -0.1}) == ParamVector{0.1, -0.1});
    CHECK(s.exchanged_models == 1);
    CHECK_THROWS_AS(collect(s, 5, std::nullopt), ProtocolError);
    s.blacklist.insert(6);
    CHECK_THROWS_AS(collect(s, 6, ParamVector{0.0, 0.0}), ProtocolError);
}

TEST_CASE("similarity row") {
    const ParamVector d{1.0, 2.0};
    std::map<ClientId, ParamVector> pool{
        {0, ParamVector{1.0, 2.0}}, {1, ParamVector{-1.0, -2.0}}, {2, ParamVector{-2.0, 1.0}}, {7, ParamVector{9.0, 9.0}}};
    const auto row = similarity_row(d, pool, 7);
    CHECK(row.size() == 3);
    CHECK(row.at(0) == doctest::Approx(1.0));
    CHECK(row.at(1) == doctest::Approx(-1.0));
    CHECK(row.at(2) == doctest::Approx(0.0));
    CHECK(similarity_row(ParamVector{0.0, 0.0}, pool, 7).at(0) == 0.0);
}

TEST_CASE("normalize_weights examples") {
    const auto uniform = normalize_weights({{0, 0.3}, {1, -0.2}, {2, 0.9}, {3, 0.0}}, 0.0, 0.1, std::nullopt);
    for (const auto& [id, w] : uniform) CHECK(w == doctest::Approx(0.25));

    const auto with_self = normalize_weights({{1, 0.4}, {2, 0.4}}, 5.0, 0.2, ClientId{0});
    CHECK(with_self.at(0) == doctest::Approx(0.2));
    CHECK(with_self.at(1) == doctest::Approx(0.4));
    CHECK(with_self.at(2) == doctest::Approx(0.4));

    const auto sharp = normalize_weights({{0, 1.0}, {1, -1.0}}, 10.0, 0.1, std::nullopt);
    const double e = std::exp(-20.0);
    CHECK(sharp.at(0) == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-14));
    CHECK(sharp.at(1) == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));

    const auto alone = normalize_weights({}, 10.0, 0.1, ClientId{4});
    CHECK(alone.at(4) == 1.0);
    CHECK_THROWS_AS(normalize_weights({}, 10.0, 0.1, std::nullopt), ConfigError);
}

TEST_CASE("normalize_weights matches the closed-form softmax and is a distribution") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::map<ClientId, double> sims;
        for (int i = 1; i <= 6; ++i) sims[i] = u(rng);
        const double alpha = 10.0 * (u(rng) + 1.0);
        const double phi = 0.5 * (u(rng) + 1.0) * 0.99;
        const bool self = t % 2 == 0;
        const auto w = normalize_weights(sims, alpha, phi, self ? std::optional<ClientId>(0) : std::nullopt);
        double z = 0.0;
        for (const auto& [id, s] : sims) z += std::exp(alpha * s);
        for (const auto& [id, s] : sims) {
            const double expected = (self ? 1.0 - phi : 1.0) * std::exp(alpha * s) / z;
            CHECK(w.at(id) == doctest::Approx(expected).epsilon(1e-12));
            CHECK(w.at(id) >= 0.0);
        }
        CHECK(std::abs(weight_sum(w) - 1.0) <= 1e-9);
    }
}

TEST_CASE("raising alpha increases the weight of the most similar entry") {
    const std::map<ClientId, double> sims{{0, 0.9}, {1, 0.2}, {2, -0.5}};
    double prev = 0.0;
    for (double alpha : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0}) {
        const double w = normalize_weights(sims, alpha, 0.1, std::nullopt).at(0);
        CHECK(w > prev);
        prev = w;
    }
}

TEST_CASE("customize matches a straight-line weighted sum") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const ServerState s = pool_state(rng, 3, 7);
        const ParamVector d(oracle::random_vector(rng, 7));
        const CustomizationParams params{5.0, 0.1, 10.0};
        const ClientId k = t % 2 == 0 ? 1 : 9;
        const auto c = customize(s, k, d, params);
        std::map<ClientId, double> w;
        double z = 0.0;
        for (const auto& [id, dt] : s.calibrated_pool) {
            if (id == k) continue;
            double dp = 0.0;
            for (std::size_t j = 0; j < 7; ++j) dp += d[j] * dt[j];
            w[id] = std::exp(params.alpha * dp / (oracle::l2(d) * oracle::l2(dt)));
            z += w[id];
        }
        const bool returning = s.recovered_pool.contains(k);
        for (auto& [id, v] : w) v = v / z * (returning ? 1.0 - params.phi : 1.0);
        if (returning) w[k] = params.phi;
        for (std::size_t j = 0; j < 7; ++j) {
            double expected = 0.0;
            for (const auto& [id, v] : w) expected += v * s.recovered_pool.at(id)[j];
            CHECK(c.model[j] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("customize over one entry or identical entries returns that model") {
    ServerState s;
    s.global_model = ParamVector{0.0, 0.0};
    s.recovered_pool[0] = ParamVector{1.0, 2.0};
    s.calibrated_pool[0] = ParamVector{0.3, 0.3};
    CHECK(customize(s, 5, ParamVector{1.0, 0.0}, {}).model == ParamVector{1.0, 2.0});
    for (ClientId i = 1; i < 4; ++i) {
        s.recovered_pool[i] = ParamVector{1.0, 2.0};
        s.calibrated_pool[i] = ParamVector{0.1 * i, -0.2};
    }
    const auto c = customize(s, 2, ParamVector{1.0, 0.0}, {7.0, 0.3, 10.0});
    CHECK(c.model[0] == doctest::Approx(1.0));
    CHECK(c.model[1] == doctest::Approx(2.0));
}

TEST_CASE("update_global weights by sample count") {
    ServerState s;
    s.global_model = ParamVector{0.0, 0.0};
    s.recovered_pool[0] = ParamVector{0.0, 4.0};
    s.recovered_pool[1] = ParamVector{4.0, 0.0};
    s.calibrated_pool[0] = ParamVector{0.0, 0.0};
    s.calibrated_pool[1] = ParamVector{0.0, 0.0};
    s.sample_counts[0] = 100;
    s.sample_counts[1] = 300;
    const ParamVector g = update_global(s);
    CHECK(g[0] == doctest::Approx(3.0));
    CHECK(g[1] == doctest::Approx(1.0));
}

TEST_CASE("recover and calibrate") {
    CHECK(recover(ParamVector{1.0, 1.0}, ParamVector{0.5, -0.5}) == ParamVector{1.5, 0.5});
    const ParamVector dt = calibrate(ParamVector{1.5, 0.5}, ParamVector{0.8, 1.2});
    CHECK(dt[0] == doctest::Approx(0.7));
    CHECK(dt[1] == doctest::Approx(-0.7));
    const ParamVector w{0.2, -0.3};
    const ParamVector d{0.05, 0.01};
    CHECK(calibrate(recover(w, d), w) == (w + d) - w);
    CHECK(recover(w, ParamVector{0.0, 0.0}) == w);
    const ParamVector wk{1.25, -2.5};
    CHECK(recover(w, compute_update(wk, w)) == wk);
}

TEST_CASE("scaled updates change the calibrated direction") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        const ParamVector w_hat(oracle::random_vector(rng, 6));
        const ParamVector w(oracle::random_vector(rng, 6));
        const ParamVector d(oracle::random_vector(rng, 6));
        const ParamVector honest = calibrate(recover(w_hat, d), w);
        const ParamVector scaled = calibrate(recover(w_hat, 20.0 * d), w);
        CHECK(cosine(honest, scaled) < 1.0 - 1e-6);
    }
}

TEST_CASE("detect") {
    ServerState s;
    s.global_model = ParamVector{0.0, 0.0};
    CHECK(detect(s, 1, ParamVector{1.0, 1.0}, ParamVector{0.0, 0.0}, 50, 10.0) == Verdict::benign);
    CHECK(s.recovered_pool.contains(1));
    CHECK(s.sample_counts.at(1) == 50);
    CHECK(detect(s, 2, ParamVector{10.5, 0.0}, ParamVector{10.5, 0.0}, 50, 10.0) == Verdict::malicious);
    CHECK(s.blacklist.contains(2));
    CHECK_FALSE(s.recovered_pool.contains(2));
    CHECK(detect(s, 3, ParamVector{NAN, 0.0}, ParamVector{NAN, 0.0}, 50, 10.0) == Verdict::malicious);
    s.check_invariants();
}

TEST_CASE("participant sampling") {
    const std::vector<ClientId> eligible{0, 2, 3, 5, 8, 9, 11, 12, 13, 17};
    const auto all = sample_participants(eligible, 1.0, 1);
    CHECK(all == eligible);
    const auto some = sample_participants(eligible, 0.2, 1);
    CHECK(some.size() == 2);
    CHECK(std::is_sorted(some.begin(), some.end()));
    CHECK(some == sample_participants(eligible, 0.2, 1));
    CHECK(sample_participants(eligible, 0.01, 1).size() == 1);
}

TEST_CASE("customization params validation") {
    CustomizationParams p;
    p.phi = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.t_norm = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.alpha = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("round zero: every client starts at w0 and calibrated equals uploaded") {
    Federation fed = small_federation(6, 3);
    ServerState s = make_initial_state(init_params(fed.arch, 7));
    const ParamVector w0 = s.global_model;
    std::vector<ClientId> ids(6);
    std::iota(ids.begin(), ids.end(), 0);
    const RoundReport r = run_round(s, fed, ids, {}, 11);
    CHECK(r.round == 0);
    CHECK(r.weights.empty());
    CHECK(s.round == 1);
    CHECK(s.global_model == w0);
    for (const auto& row : r.rows) {
        CHECK(row.calibrated_norm == doctest::Approx(row.update_norm).epsilon(1e-12));
        CHECK(row.verdict == Verdict::benign);
    }
    CHECK(s.recovered_pool.size() == 6);
    CHECK(r.exchanged_models == 12);
    s.check_invariants();
}

TEST_CASE("later rounds keep invariants and the blacklist grows only") {
    Federation fed = small_federation(8, 4);
    fed.malicious = {1, 6};
    fed.attack.kind = AttackKind::mr;
    fed.attack.malicious_fraction = 0.25;
    fed.attack.mr_scale = 200.0;
    ServerState s = make_initial_state(init_params(fed.arch, 7));
    std::set<ClientId> prev;
    for (std::size_t t = 0; t < 4; ++t) {
        std::vector<ClientId> eligible;
        for (ClientId i = 0; i < 8; ++i)
            if (!s.is_blacklisted(i)) eligible.push_back(i);
        const RoundReport r = run_round(s, fed, eligible, {}, 5);
        s.check_invariants();
        for (auto id : prev) CHECK(s.blacklist.contains(id));
        for (const auto& [k, w] : r.weights) {
            CHECK(std::abs(weight_sum(w) - 1.0) <= 1e-9);
            for (const auto& [j, v] : w) CHECK_FALSE(prev.contains(j));
        }
        for (const auto& row : r.rows) CHECK_FALSE(prev.contains(row.id));
        prev = s.blacklist;
    }
    CHECK_FALSE(s.blacklist.empty());
    for (auto id : s.blacklist) CHECK(fed.is_malicious(id));
}

TEST_CASE("a new client uses its probe and counts an extra exchange") {
    Federation fed = small_federation(4, 5);
    ServerState s = make_initial_state(init_params(fed.arch, 7));
    run_round(s, fed, {0, 1, 2}, {}, 1);
    const std::size_t before = s.exchanged_models;
    const RoundReport r = run_round(s, fed, {0, 1, 2, 3}, {}, 1);
    CHECK(r.exchanged_models == before + 1 + 2 * 4);
    CHECK_FALSE(r.weights.at(3).contains(3));
    CHECK(r.weights.at(0).at(0) == doctest::Approx(0.1));
}

TEST_CASE("run_round is deterministic") {
    Federation a = small_federation(5, 6), b = small_federation(5, 6);
    ServerState sa = make_initial_state(init_params(a.arch, 7));
    ServerState sb = sa;
    for (int t = 0; t < 3; ++t) {
        run_round(sa, a, {0, 1, 2, 3, 4}, {}, 9);
        run_round(sb, b, {0, 1, 2, 3, 4}, {}, 9);
    }
    CHECK(sa.global_model == sb.global_model);
    CHECK(sa.recovered_pool == sb.recovered_pool);
}
