#pragma once

#include "fedcap/attacks.hpp"
#include "fedcap/client.hpp"
#include "fedcap/report.hpp"

#include <map>
#include <optional>
#include <set>
#include <vector>

namespace fedcap {

struct CustomizationParams {
    double alpha = 10.0;  // softmax sharpness over similarities
    double phi = 0.1;     // returning client's weight on its own recovered model
    double t_norm = 10.0; // calibrated-update norm that triggers removal

    void validate() const;
};

/// Server-side memory between rounds. The two pools always share one key
/// set: the clients that passed detection in the previous round.
struct ServerState {
    std::size_t round = 0;
    ParamVector global_model;
    std::map<ClientId, ParamVector> recovered_pool;
    std::map<ClientId, ParamVector> calibrated_pool;
    std::map<ClientId, std::size_t> sample_counts;
    std::set<ClientId> blacklist;
    std::size_t exchanged_models = 0;

    bool is_blacklisted(ClientId k) const { return blacklist.contains(k); }
    /// Throws ProtocolError when a structural invariant is broken.
    void check_invariants() const;
};

/// The update the server uses for client k's similarity row: the pooled
/// calibrated update for a returning client, else the probe the client sent
/// back after training on the previous global model (one extra exchange).
ParamVector collect(ServerState& state, ClientId k, const std::optional<ParamVector>& probe);

/// Cosine similarity of d_k to every pool entry other than k.
std::map<ClientId, double> similarity_row(const ParamVector& d_k,
                                          const std::map<ClientId, ParamVector>& calibrated_pool,
                                          ClientId k);

/// Softmax with sharpness alpha over the similarities. With `self` set, that
/// id gets weight phi and the softmax is scaled by 1 - phi; with no other
/// entries the self weight is 1.
std::map<ClientId, double> normalize_weights(const std::map<ClientId, double>& similarities,
                                             double alpha, double phi,
                                             std::optional<ClientId> self);

struct Customization {
    ParamVector model;
    std::map<ClientId, double> weights;
};

/// w_hat_k = sum_i p'_{k,i} * w_tilde_i over the recovered pool.
Customization customize(const ServerState& state, ClientId k, const ParamVector& d_k,
                        const CustomizationParams& params);

/// Sample-count weighted mean of the recovered pool.
ParamVector update_global(const ServerState& state);

ParamVector recover(const ParamVector& customized, const ParamVector& update);
ParamVector calibrate(const ParamVector& recovered, const ParamVector& global_model);

/// ||d_tilde|| > t_norm (or non-finite) blacklists k permanently and keeps it
/// out of the pools; otherwise (w_tilde, d_tilde) enter the pools.
Verdict detect(ServerState& state, ClientId k, const ParamVector& recovered,
               const ParamVector& calibrated, std::size_t num_samples, double t_norm);

/// Uniform sample without replacement of round(ratio * |eligible|) ids
/// (at least one), returned ascending.
std::vector<ClientId> sample_participants(const std::vector<ClientId>& eligible, double ratio,
                                          std::uint64_t seed);

/// Everything about the simulated population the round loop needs.
struct Federation {
    ModelArch arch;
    std::vector<ClientRecord> clients;  // index == id; LF clients hold flipped train labels
    std::set<ClientId> malicious;
    AttackSpec attack;
    LocalConfig local;

    bool is_malicious(ClientId k) const { return malicious.contains(k); }
};

/// Starting state: w^0 as global model, empty pools.
ServerState make_initial_state(ParamVector initial_model);

/// One round of the FedCAP protocol over `participants` (ascending, none
/// blacklisted). Client personalized models in `fed` are updated in place.
RoundReport run_round(ServerState& state, Federation& fed, const std::vector<ClientId>& participants,
                      const CustomizationParams& params, std::uint64_t seed);

}  // namespace fedcap
