#include "doctest.h"
#include "oracles.hpp"

#include "fedcap/client.hpp"
#include "fedcap/data.hpp"
#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <algorithm>
#include <cmath>

using namespace fedcap;

namespace {

struct Fixture {
    ModelArch arch{6, 5, 3};
    ClientRecord client;

    Fixture() {
        DatasetSpec spec;
        spec.num_classes = 3;
        spec.input_dim = 6;
        spec.samples_per_client = 40;
        const Batch pool = generate(spec, 40, 12);
        std::vector<std::size_t> rows(40);
        for (std::size_t i = 0; i < 40; ++i) rows[i] = i;
        client.train = pool.select(std::vector<std::size_t>(rows.begin(), rows.begin() + 30));
        client.test = pool.select(std::vector<std::size_t>(rows.begin() + 30, rows.end()));
        client.personalized = init_params(arch, 2);
    }
};

}  // namespace

TEST_CASE("epoch_batches covers every row once, last batch short") {
    const auto batches = epoch_batches(23, 10, 4);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 10);
    CHECK(batches[2].size() == 3);
    std::vector<std::size_t> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 23; ++i) CHECK(all[i] == i);
    CHECK(epoch_batches(23, 10, 4) == batches);
}

TEST_CASE("proximal objective gradient matches finite differences") {
    Fixture f;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const ParamVector v(oracle::random_vector(rng, f.arch.param_count(), 0.5));
        const ParamVector anchor(oracle::random_vector(rng, f.arch.param_count(), 0.5));
        const double lambda = 0.5 + 0.1 * trial;
        auto objective = [&](const ParamVector& x) {
            return forward_loss(f.arch, x, f.client.train) + 0.5 * lambda * oracle::sq_dist(x, anchor);
        };
        const auto fd = oracle::fd_gradient(objective, v, 1e-5);
        const ParamVector g = gradient(f.arch, v, f.client.train) + proximal_gradient(v, anchor, lambda);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < fd.size(); ++i) {
            num += (fd[i] - g[i]) * (fd[i] - g[i]);
            den += fd[i] * fd[i] + g[i] * g[i];
        }
        CHECK(std::sqrt(num) <= 1e-4 * std::sqrt(den));
    }
}

TEST_CASE("proximal gradient is lambda (v - anchor)") {
    const ParamVector g = proximal_gradient(ParamVector{1.0, 2.0}, ParamVector{0.0, 4.0}, 0.5);
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(-1.0));
}

TEST_CASE("one full-batch epoch equals the two explicit steps") {
    Fixture f;
    LocalConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = f.client.train.size();
    cfg.lr = 0.05;
    cfg.lambda = 0.7;
    const ParamVector w_hat = init_params(f.arch, 9);
    const auto res = client_update(f.arch, f.client, w_hat, cfg, 31);

    // The batch is a permutation of the whole set; the mean loss is order-free.
    const ParamVector& v0 = f.client.personalized;
    const ParamVector gv = gradient(f.arch, v0, f.client.train);
    ParamVector v1 = v0;
    for (std::size_t i = 0; i < v1.dim(); ++i) v1[i] -= cfg.lr * (gv[i] + cfg.lambda * (v0[i] - w_hat[i]));
    const ParamVector gw = gradient(f.arch, w_hat, f.client.train);
    ParamVector w1 = w_hat;
    for (std::size_t i = 0; i < w1.dim(); ++i) w1[i] -= cfg.lr * gw[i];

    for (std::size_t i = 0; i < v1.dim(); ++i) {
        CHECK(res.personalized[i] == doctest::Approx(v1[i]).epsilon(1e-10));
        CHECK(res.local_model[i] == doctest::Approx(w1[i]).epsilon(1e-10));
    }
}

TEST_CASE("local model path equals plain local SGD") {
    Fixture f;
    LocalConfig cfg;
    const ParamVector w_hat = init_params(f.arch, 9);
    const auto res = client_update(f.arch, f.client, w_hat, cfg, 17);
    CHECK(res.local_model == local_sgd(f.arch, f.client.train, w_hat, cfg, 17));
}

TEST_CASE("client_update is deterministic and seed sensitive") {
    Fixture f;
    LocalConfig cfg;
    const ParamVector w_hat = init_params(f.arch, 9);
    const auto a = client_update(f.arch, f.client, w_hat, cfg, 1);
    const auto b = client_update(f.arch, f.client, w_hat, cfg, 1);
    const auto c = client_update(f.arch, f.client, w_hat, cfg, 2);
    CHECK(a.local_model == b.local_model);
    CHECK(a.personalized == b.personalized);
    CHECK_FALSE(a.local_model == c.local_model);
}

TEST_CASE("training improves accuracy on separable data") {
    Fixture f;
    LocalConfig cfg;
    cfg.epochs = 20;
    cfg.lr = 0.05;
    const ParamVector w0 = init_params(f.arch, 9);
    const auto res = client_update(f.arch, f.client, w0, cfg, 3);
    CHECK(evaluate(f.arch, f.client.train, res.local_model) > 0.8);
    CHECK(evaluate(f.arch, f.client.train, res.personalized) > 0.8);
}

TEST_CASE("compute_update is the difference") {
    CHECK(compute_update(ParamVector{1.0, 3.0}, ParamVector{0.5, 1.0}) == ParamVector{0.5, 2.0});
}

TEST_CASE("evaluate counts argmax hits") {
    const ModelArch arch{1, 0, 2};
    // logit_1 = x, logit_0 = 0: predicts class 1 iff x > 0.
    const ParamVector w{0.0, 1.0, 0.0, 0.0};
    Batch b;
    b.input_dim = 1;
    for (double x : {1.0, 2.0, -1.0, -3.0}) b.push_back(&x, 1);
    CHECK(evaluate(arch, b, w) == doctest::Approx(0.5));
}

TEST_CASE("invalid local config is rejected") {
    LocalConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LocalConfig{};
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
