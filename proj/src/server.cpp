#include "fedcap/server.hpp"

#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <iostream>

namespace fedcap {

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::benign: return "benign";
        case Verdict::malicious: return "malicious";
        case Verdict::unchecked: return "unchecked";
    }
    return "unchecked";
}

void CustomizationParams::validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
    if (!(phi >= 0.0 && phi < 1.0)) throw ConfigError("phi must be in [0, 1)");
    if (!(t_norm > 0.0)) throw ConfigError("t_norm must be positive");
}

void ServerState::check_invariants() const {
    if (recovered_pool.size() != calibrated_pool.size() ||
        recovered_pool.size() != sample_counts.size()) {
        throw ProtocolError("server pools disagree in size");
    }
    for (const auto& [id, w] : recovered_pool) {
        if (!calibrated_pool.contains(id) || !sample_counts.contains(id)) {
            throw ProtocolError(fmt::format("client {} missing from a pool", id));
        }
        if (blacklist.contains(id)) throw ProtocolError(fmt::format("blacklisted client {} in pool", id));
        if (w.dim() != global_model.dim() || calibrated_pool.at(id).dim() != global_model.dim()) {
            throw ProtocolError(fmt::format("client {} pool entry has the wrong dim", id));
        }
    }
}

ParamVector collect(ServerState& state, ClientId k, const std::optional<ParamVector>& probe) {
    if (state.is_blacklisted(k)) throw ProtocolError(fmt::format("client {} is blacklisted", k));
    if (auto it = state.calibrated_pool.find(k); it != state.calibrated_pool.end()) {
        return it->second;
    }
    if (!probe) throw ProtocolError(fmt::format("new client {} sent no probe update", k));
    require_same_dim(*probe, state.global_model);
    ++state.exchanged_models;
    return *probe;
}

std::map<ClientId, double> similarity_row(const ParamVector& d_k,
                                          const std::map<ClientId, ParamVector>& calibrated_pool,
                                          ClientId k) {
    std::map<ClientId, double> row;
    for (const auto& [id, d] : calibrated_pool) {
        if (id != k) row.emplace(id, cosine(d_k, d));
    }
    return row;
}

std::map<ClientId, double> normalize_weights(const std::map<ClientId, double>& similarities,
                                             double alpha, double phi,
                                             std::optional<ClientId> self) {
    std::map<ClientId, double> out;
    if (similarities.empty()) {
        if (!self) throw ConfigError("cannot normalize an empty similarity row");
        out.emplace(*self, 1.0);
        return out;
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (const auto& [id, s] : similarities) peak = std::max(peak, alpha * s);
    double total = 0.0;
    for (const auto& [id, s] : similarities) {
        const double e = std::exp(alpha * s - peak);
        out.emplace(id, e);
        total += e;
    }
    const double mass = self ? 1.0 - phi : 1.0;
    for (auto& [id, w] : out) w = mass * w / total;
    if (self) out[*self] = phi;
    return out;
}

Customization customize(const ServerState& state, ClientId k, const ParamVector& d_k,
                        const CustomizationParams& params) {
    if (state.recovered_pool.empty()) {
        throw ProtocolError("customization needs a non-empty recovered pool");
    }
    const bool returning = state.recovered_pool.contains(k);
    Customization out;
    out.weights = normalize_weights(similarity_row(d_k, state.calibrated_pool, k), params.alpha,
                                    params.phi, returning ? std::optional<ClientId>(k) : std::nullopt);
    out.model = ParamVector(state.global_model.dim());
    for (const auto& [id, w] : out.weights) out.model.axpy(w, state.recovered_pool.at(id));
    return out;
}

ParamVector update_global(const ServerState& state) {
    if (state.recovered_pool.empty()) throw ProtocolError("global update needs a non-empty pool");
    double total = 0.0;
    for (const auto& [id, w] : state.recovered_pool) total += static_cast<double>(state.sample_counts.at(id));
    ParamVector out(state.global_model.dim());
    for (const auto& [id, w] : state.recovered_pool) {
        out.axpy(static_cast<double>(state.sample_counts.at(id)) / total, w);
    }
    return out;
}

ParamVector recover(const ParamVector& customized, const ParamVector& update) {
    return customized + update;
}

ParamVector calibrate(const ParamVector& recovered, const ParamVector& global_model) {
    return recovered - global_model;
}

Verdict detect(ServerState& state, ClientId k, const ParamVector& recovered,
               const ParamVector& calibrated, std::size_t num_samples, double t_norm) {
    const double n = norm(calibrated);
    if (!std::isfinite(n) || n > t_norm) {
        state.blacklist.insert(k);
        state.recovered_pool.erase(k);
        state.calibrated_pool.erase(k);
        state.sample_counts.erase(k);
        return Verdict::malicious;
    }
    state.recovered_pool.insert_or_assign(k, recovered);
    state.calibrated_pool.insert_or_assign(k, calibrated);
    state.sample_counts.insert_or_assign(k, num_samples);
    return Verdict::benign;
}

std::vector<ClientId> sample_participants(const std::vector<ClientId>& eligible, double ratio,
                                          std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("participation ratio must be in (0, 1]");
    if (eligible.empty()) return {};
    auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(eligible.size())));
    count = std::clamp<std::size_t>(count, 1, eligible.size());
    std::vector<ClientId> pool = eligible;
    std::sort(pool.begin(), pool.end());
    Rng rng(seed);
    shuffle(pool, rng);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

ServerState make_initial_state(ParamVector initial_model) {
    ServerState state;
    state.global_model = std::move(initial_model);
    return state;
}

namespace {

ParamVector poisoned_placeholder(std::size_t dim) {
    return ParamVector(dim, std::numeric_limits<double>::infinity());
}

}  // namespace

RoundReport run_round(ServerState& state, Federation& fed, const std::vector<ClientId>& participants,
                      const CustomizationParams& params, std::uint64_t seed) {
    params.validate();
    const std::size_t t = state.round;
    const std::size_t dim = state.global_model.dim();
    for (ClientId k : participants) {
        if (state.is_blacklisted(k)) throw ProtocolError(fmt::format("client {} is blacklisted", k));
        if (k < 0 || static_cast<std::size_t>(k) >= fed.clients.size()) {
            throw ProtocolError(fmt::format("unknown client {}", k));
        }
    }

    RoundReport report;
    report.round = t;
    const ParamVector previous_global = state.global_model;
    std::map<ClientId, ParamVector> customized;

    if (t > 0 && !state.recovered_pool.empty()) {
        // Probes from clients absent last round: local SGD from w^{t-1}.
        std::vector<HonestUpload> probes;
        for (ClientId k : participants) {
            if (state.calibrated_pool.contains(k)) continue;
            const auto& client = fed.clients[static_cast<std::size_t>(k)];
            const auto probe_seed = derive_seed(seed, Stream::batching, t, 2 * static_cast<std::uint64_t>(k) + 1);
            ParamVector d;
            try {
                d = compute_update(local_sgd(fed.arch, client.train, previous_global, fed.local, probe_seed),
                                   previous_global);
            } catch (const NumericalError&) {
                if (!fed.is_malicious(k)) throw;
                d = poisoned_placeholder(dim);
            }
            probes.push_back({k, std::move(d), fed.is_malicious(k)});
        }
        probes = apply_attack(fed.attack, std::move(probes));
        std::map<ClientId, ParamVector> probe_by_id;
        for (auto& p : probes) probe_by_id.emplace(p.id, std::move(p.update));

        for (ClientId k : participants) {
            std::optional<ParamVector> probe;
            if (auto it = probe_by_id.find(k); it != probe_by_id.end()) probe = it->second;
            const ParamVector d_k = collect(state, k, probe);
            auto c = customize(state, k, d_k, params);
            customized.emplace(k, std::move(c.model));
            report.weights.emplace(k, std::move(c.weights));
        }
        state.global_model = update_global(state);
    } else {
        if (t > 0) {
            report.degenerate = true;
            std::cerr << "warning: round " << t
                      << ": recovered pool is empty, reusing the previous global model\n";
        }
        for (ClientId k : participants) customized.emplace(k, previous_global);
    }
    const ParamVector& global = state.global_model;
    state.exchanged_models += participants.size();

    std::vector<HonestUpload> uploads;
    std::map<ClientId, ClientRoundRow> rows;
    for (ClientId k : participants) {
        auto& client = fed.clients[static_cast<std::size_t>(k)];
        const bool bad = fed.is_malicious(k);
        const auto train_seed = derive_seed(seed, Stream::batching, t, 2 * static_cast<std::uint64_t>(k));
        const ParamVector& start = customized.at(k);
        ClientRoundRow row;
        row.id = k;
        row.malicious = bad;
        row.acc_customized = start.all_finite() ? evaluate(fed.arch, client.test, start) : 0.0;
        ParamVector d;
        try {
            auto result = client_update(fed.arch, client, start, fed.local, train_seed);
            d = compute_update(result.local_model, start);
            client.personalized = std::move(result.personalized);
            row.acc_personalized = evaluate(fed.arch, client.test, client.personalized);
        } catch (const NumericalError& e) {
            if (!bad) {
                throw NumericalError(fmt::format("round {}: benign client {}: {}", t, k, e.what()));
            }
            d = poisoned_placeholder(dim);
        }
        uploads.push_back({k, std::move(d), bad});
        rows.emplace(k, row);
    }
    uploads = apply_attack(fed.attack, std::move(uploads));
    state.exchanged_models += participants.size();

    state.recovered_pool.clear();
    state.calibrated_pool.clear();
    state.sample_counts.clear();
    for (const auto& up : uploads) {
        auto& row = rows.at(up.id);
        const ParamVector recovered = recover(customized.at(up.id), up.update);
        const ParamVector calibrated = calibrate(recovered, global);
        row.update_norm = norm(up.update);
        row.calibrated_norm = norm(calibrated);
        row.verdict = detect(state, up.id, recovered, calibrated,
                             fed.clients[static_cast<std::size_t>(up.id)].num_train_samples(),
                             params.t_norm);
        report.rows.push_back(row);
    }
    state.round = t + 1;
    report.exchanged_models = state.exchanged_models;
    return report;
}

}  // namespace fedcap
