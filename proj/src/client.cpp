#include "fedcap/client.hpp"

#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <fmt/format.h>

namespace fedcap {

void LocalConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_samples,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    const auto order = permutation(num_samples, rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < num_samples; start += batch_size) {
        const std::size_t stop = std::min(num_samples, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

ParamVector proximal_gradient(const ParamVector& v, const ParamVector& anchor, double lambda) {
    ParamVector g = v - anchor;
    g *= lambda;
    return g;
}

namespace {

void require_finite(const ParamVector& p, ClientId id, const char* what) {
    if (!p.all_finite()) {
        throw NumericalError(fmt::format("client {}: non-finite {} during local training", id, what));
    }
}

void check_client(const ModelArch& arch, const Batch& train, const ParamVector& start) {
    if (train.size() == 0) throw ConfigError("client has an empty training shard");
    if (start.dim() != arch.param_count()) {
        throw ConfigError(fmt::format("model dim {} does not match architecture {}", start.dim(),
                                      arch.param_count()));
    }
}

}  // namespace

ClientUpdateResult client_update(const ModelArch& arch, const ClientRecord& client,
                                 const ParamVector& customized, const LocalConfig& cfg,
                                 std::uint64_t seed) {
    cfg.validate();
    check_client(arch, client.train, customized);
    require_same_dim(customized, client.personalized);

    ParamVector w = customized;
    ParamVector v = client.personalized;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        for (const auto& rows : epoch_batches(client.train.size(), cfg.batch_size, splitmix64(seed + e))) {
            const Batch batch = client.train.select(rows);
            ParamVector gv = gradient(arch, v, batch);
            gv += proximal_gradient(v, w, cfg.lambda);
            v = sgd_step(v, gv, cfg.lr);
            w = sgd_step(w, gradient(arch, w, batch), cfg.lr);
        }
        require_finite(v, client.id, "personalized model");
        require_finite(w, client.id, "local model");
    }
    return {std::move(w), std::move(v)};
}

ParamVector local_sgd(const ModelArch& arch, const Batch& train, const ParamVector& start,
                      const LocalConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    check_client(arch, train, start);
    ParamVector w = start;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        for (const auto& rows : epoch_batches(train.size(), cfg.batch_size, splitmix64(seed + e))) {
            w = sgd_step(w, gradient(arch, w, train.select(rows)), cfg.lr);
        }
    }
    if (!w.all_finite()) throw NumericalError("non-finite model during local training");
    return w;
}

ParamVector compute_update(const ParamVector& local_model, const ParamVector& customized) {
    return local_model - customized;
}

double evaluate(const ModelArch& arch, const Batch& test, const ParamVector& model) {
    if (test.size() == 0) throw ConfigError("cannot evaluate on an empty test shard");
    const auto pred = predict(arch, model, test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += (pred[i] == test.labels[i]) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedcap
