#pragma once

#include "fedcap/model.hpp"

#include <cstdint>
#include <vector>

namespace fedcap {

using ClientId = int;

struct LocalConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 10;
    double lr = 0.01;
    double lambda = 0.5;  // proximal weight pulling v toward the customized model

    void validate() const;
};

struct ClientRecord {
    ClientId id = 0;
    Batch train;
    Batch test;
    ParamVector personalized;  // v_k, carried across rounds

    std::size_t num_train_samples() const noexcept { return train.size(); }
};

struct ClientUpdateResult {
    ParamVector local_model;   // customized model after local SGD (w_k)
    ParamVector personalized;  // next personalized model (v_k)
};

/// Row indices for each mini-batch of one epoch: a seeded permutation cut
/// into batch_size chunks, the last chunk possibly shorter.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_samples,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed);

/// Gradient of (lambda/2)||v - anchor||^2 with respect to v.
ParamVector proximal_gradient(const ParamVector& v, const ParamVector& anchor, double lambda);

/// Alternating personalized training. For every mini-batch, v takes one step
/// on L(v) + (lambda/2)||v - w||^2 with w frozen, then w takes one step on L(w).
/// Epoch e uses epoch_batches(n, batch_size, derive(seed, e)).
ClientUpdateResult client_update(const ModelArch& arch, const ClientRecord& client,
                                 const ParamVector& customized, const LocalConfig& cfg,
                                 std::uint64_t seed);

/// Plain mini-batch SGD on L from `start`, same batch schedule as client_update.
ParamVector local_sgd(const ModelArch& arch, const Batch& train, const ParamVector& start,
                      const LocalConfig& cfg, std::uint64_t seed);

/// d_k = w_k - w_hat_k
ParamVector compute_update(const ParamVector& local_model, const ParamVector& customized);

/// Fraction of test rows whose argmax prediction equals the label.
double evaluate(const ModelArch& arch, const Batch& test, const ParamVector& model);

}  // namespace fedcap
