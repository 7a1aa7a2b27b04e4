#pragma once

#include "fedcap/client.hpp"
#include "fedcap/param_vector.hpp"

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace fedcap {

enum class AttackKind { none, lf, sf, mr, lie, minmax, minsum, ipm };
enum class Knowledge { partial, full };

AttackKind parse_attack_kind(std::string_view name);
std::string_view to_string(AttackKind kind);
Knowledge parse_knowledge(std::string_view name);
std::string_view to_string(Knowledge k);

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    double malicious_fraction = 0.0;
    std::optional<double> mr_scale;     // unset: participants per round
    std::optional<double> ipm_epsilon;  // unset: participants per round
    Knowledge knowledge = Knowledge::partial;

    void validate() const;
    bool poisons_updates() const noexcept {
        return kind != AttackKind::none && kind != AttackKind::lf;
    }
};

/// Updates visible to the adversary in one round, ascending client id.
struct BenignView {
    std::vector<std::pair<ClientId, ParamVector>> updates;
};

/// Malicious ids: the first ceil(p * K) entries of a seeded shuffle of 0..K-1,
/// returned sorted.
std::vector<ClientId> select_malicious(std::size_t num_clients, double fraction,
                                       std::uint64_t seed);

/// y -> (y + 1) % C on every label.
Batch poison_labels(Batch batch, std::size_t num_classes);

ParamVector poison_sf(const ParamVector& d);
ParamVector poison_mr(const ParamVector& d, double scale);

/// z^max = Phi^{-1}((n - m - s) / (n - m)) with s = floor(n/2 + 1) - m.
/// Returns nullopt when n - m <= s (attack infeasible).
std::optional<double> lie_z_max(std::size_t num_participants, std::size_t num_malicious);

/// Coordinate mean and sample standard deviation over the view.
std::pair<ParamVector, ParamVector> coordinate_mean_std(const BenignView& view);

/// mu - z * delta; falls back to z = 0 when lie_z_max is infeasible.
ParamVector poison_lie(const BenignView& view, std::size_t num_participants,
                       std::size_t num_malicious);

struct ScaledPerturbation {
    ParamVector update;
    double gamma = 0.0;
};

/// mean + gamma * (-std), gamma the largest value passing the max-distance test.
ScaledPerturbation poison_minmax(const BenignView& view);
/// Same construction under the sum-of-squared-distances test.
ScaledPerturbation poison_minsum(const BenignView& view);

/// Left-hand side tests for the two constraints; slack = bound - value.
double minmax_slack(const BenignView& view, const ParamVector& candidate);
double minsum_slack(const BenignView& view, const ParamVector& candidate);

/// (N - M(1+eps)) / (N(N-M)); ConfigError when N <= M or M == 0.
double ipm_coefficient(std::size_t n, std::size_t m, double epsilon);

/// Per-malicious-client update chosen so that the plain average over all N
/// uploads equals ipm_coefficient * sum(benign). `benign_sum` is the sum of
/// the N - M benign updates (or the adversary's estimate of it).
ParamVector poison_ipm(const ParamVector& benign_sum, std::size_t n, std::size_t m,
                       double epsilon);

struct HonestUpload {
    ClientId id;
    ParamVector update;
    bool malicious;
};

/// Replaces every malicious entry's update with its poisoned version for the
/// configured attack. Benign entries are returned unchanged. `uploads` must
/// be sorted by id.
std::vector<HonestUpload> apply_attack(const AttackSpec& spec, std::vector<HonestUpload> uploads);

}  // namespace fedcap
