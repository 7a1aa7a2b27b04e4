#include "fedcap/attacks.hpp"

#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedcap {

AttackKind parse_attack_kind(std::string_view name) {
    if (name == "none") return AttackKind::none;
    if (name == "lf") return AttackKind::lf;
    if (name == "sf") return AttackKind::sf;
    if (name == "mr") return AttackKind::mr;
    if (name == "lie") return AttackKind::lie;
    if (name == "minmax") return AttackKind::minmax;
    if (name == "minsum") return AttackKind::minsum;
    if (name == "ipm") return AttackKind::ipm;
    throw ConfigError(fmt::format("unknown attack '{}'", name));
}

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "none";
        case AttackKind::lf: return "lf";
        case AttackKind::sf: return "sf";
        case AttackKind::mr: return "mr";
        case AttackKind::lie: return "lie";
        case AttackKind::minmax: return "minmax";
        case AttackKind::minsum: return "minsum";
        case AttackKind::ipm: return "ipm";
    }
    return "none";
}

Knowledge parse_knowledge(std::string_view name) {
    if (name == "partial") return Knowledge::partial;
    if (name == "full") return Knowledge::full;
    throw ConfigError(fmt::format("unknown knowledge level '{}'", name));
}

std::string_view to_string(Knowledge k) { return k == Knowledge::full ? "full" : "partial"; }

void AttackSpec::validate() const {
    if (!(malicious_fraction >= 0.0 && malicious_fraction < 0.5)) {
        throw ConfigError("malicious_fraction must be in [0, 0.5)");
    }
    if (mr_scale && !(*mr_scale > 0.0)) throw ConfigError("mr_scale must be positive");
    if (ipm_epsilon && !(*ipm_epsilon > 0.0)) throw ConfigError("ipm_epsilon must be positive");
}

std::vector<ClientId> select_malicious(std::size_t num_clients, double fraction,
                                       std::uint64_t seed) {
    const auto count = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(num_clients) - 1e-9));
    Rng rng(seed);
    auto order = permutation(num_clients, rng);
    std::vector<ClientId> out;
    for (std::size_t i = 0; i < std::min(count, num_clients); ++i) {
        out.push_back(static_cast<ClientId>(order[i]));
    }
    std::sort(out.begin(), out.end());
    return out;
}

Batch poison_labels(Batch batch, std::size_t num_classes) {
    const auto c = static_cast<int>(num_classes);
    for (int& y : batch.labels) y = (y + 1) % c;
    return batch;
}

ParamVector poison_sf(const ParamVector& d) { return -d; }

ParamVector poison_mr(const ParamVector& d, double scale) {
    if (!(scale > 0.0)) throw ConfigError("model replacement scale must be positive");
    return scale * d;
}

std::optional<double> lie_z_max(std::size_t num_participants, std::size_t num_malicious) {
    const auto n = static_cast<long long>(num_participants);
    const auto m = static_cast<long long>(num_malicious);
    const long long s = n / 2 + 1 - m;
    if (n - m <= s || n - m <= 0) return std::nullopt;
    const double p = static_cast<double>(n - m - s) / static_cast<double>(n - m);
    if (!(p > 0.0 && p < 1.0)) return std::nullopt;
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace {

void require_view(const BenignView& view) {
    if (view.updates.empty()) throw ConfigError("attack view is empty");
    for (const auto& [id, u] : view.updates) require_same_dim(u, view.updates.front().second);
}

ParamVector view_mean(const BenignView& view) {
    ParamVector mean(view.updates.front().second.dim());
    for (const auto& [id, u] : view.updates) mean += u;
    mean *= 1.0 / static_cast<double>(view.updates.size());
    return mean;
}

}  // namespace

std::pair<ParamVector, ParamVector> coordinate_mean_std(const BenignView& view) {
    require_view(view);
    ParamVector mean = view_mean(view);
    ParamVector std_dev(mean.dim());
    const std::size_t n = view.updates.size();
    if (n < 2) return {std::move(mean), std::move(std_dev)};
    for (const auto& [id, u] : view.updates) {
        for (std::size_t i = 0; i < mean.dim(); ++i) {
            const double d = u[i] - mean[i];
            std_dev[i] += d * d;
        }
    }
    for (double& s : std_dev) s = std::sqrt(s / static_cast<double>(n - 1));
    return {std::move(mean), std::move(std_dev)};
}

ParamVector poison_lie(const BenignView& view, std::size_t num_participants,
                       std::size_t num_malicious) {
    auto [mean, std_dev] = coordinate_mean_std(view);
    const double z = lie_z_max(num_participants, num_malicious).value_or(0.0);
    mean.axpy(-z, std_dev);
    return mean;
}

double minmax_slack(const BenignView& view, const ParamVector& candidate) {
    require_view(view);
    double bound = 0.0;
    for (std::size_t i = 0; i < view.updates.size(); ++i) {
        for (std::size_t j = i + 1; j < view.updates.size(); ++j) {
            bound = std::max(bound, distance(view.updates[i].second, view.updates[j].second));
        }
    }
    double worst = 0.0;
    for (const auto& [id, u] : view.updates) worst = std::max(worst, distance(candidate, u));
    return bound - worst;
}

double minsum_slack(const BenignView& view, const ParamVector& candidate) {
    require_view(view);
    double bound = 0.0;
    for (const auto& [id_i, ui] : view.updates) {
        double s = 0.0;
        for (const auto& [id_j, uj] : view.updates) s += squared_distance(ui, uj);
        bound = std::max(bound, s);
    }
    double total = 0.0;
    for (const auto& [id, u] : view.updates) total += squared_distance(candidate, u);
    return bound - total;
}

namespace {

template <typename Slack>
ScaledPerturbation scaled_perturbation(const BenignView& view, Slack slack) {
    auto [mean, std_dev] = coordinate_mean_std(view);
    if (norm(std_dev) == 0.0) return {std::move(mean), 0.0};
    const ParamVector direction = -std_dev;

    auto candidate = [&](double g) {
        ParamVector c = mean;
        c.axpy(g, direction);
        return c;
    };

    double gamma = 10.0;
    double step = gamma / 2.0;
    double best = 0.0;
    while (true) {
        if (slack(view, candidate(gamma)) >= 0.0) {
            best = std::max(best, gamma);
            gamma += step;
        } else {
            gamma -= step;
        }
        step /= 2.0;
        if (step < 1e-3) break;
    }
    return {candidate(best), best};
}

}  // namespace

ScaledPerturbation poison_minmax(const BenignView& view) {
    return scaled_perturbation(view, minmax_slack);
}

ScaledPerturbation poison_minsum(const BenignView& view) {
    return scaled_perturbation(view, minsum_slack);
}

double ipm_coefficient(std::size_t n, std::size_t m, double epsilon) {
    if (m == 0 || n <= m) {
        throw ConfigError(fmt::format("IPM needs N > M >= 1 (N={}, M={})", n, m));
    }
    const auto N = static_cast<double>(n), M = static_cast<double>(m);
    return (N - M * (1.0 + epsilon)) / (N * (N - M));
}

ParamVector poison_ipm(const ParamVector& benign_sum, std::size_t n, std::size_t m,
                       double epsilon) {
    // avg over N = (sum_b + M x) / N = c sum_b  =>  x = (N c - 1) / M * sum_b
    const double c = ipm_coefficient(n, m, epsilon);
    const double per_client = (static_cast<double>(n) * c - 1.0) / static_cast<double>(m);
    return per_client * benign_sum;
}

std::vector<HonestUpload> apply_attack(const AttackSpec& spec, std::vector<HonestUpload> uploads) {
    const std::size_t n = uploads.size();
    const auto m = static_cast<std::size_t>(
        std::count_if(uploads.begin(), uploads.end(), [](const auto& u) { return u.malicious; }));
    if (m == 0 || !spec.poisons_updates()) return uploads;

    BenignView view;
    for (const auto& u : uploads) {
        if (u.malicious || spec.knowledge == Knowledge::full) view.updates.emplace_back(u.id, u.update);
    }
    const auto participants = static_cast<double>(n);

    switch (spec.kind) {
        case AttackKind::sf:
            for (auto& u : uploads) {
                if (u.malicious) u.update = poison_sf(u.update);
            }
            break;
        case AttackKind::mr: {
            const double scale = spec.mr_scale.value_or(participants);
            for (auto& u : uploads) {
                if (u.malicious) u.update = poison_mr(u.update, scale);
            }
            break;
        }
        case AttackKind::lie: {
            const ParamVector fake = poison_lie(view, n, m);
            for (auto& u : uploads) {
                if (u.malicious) u.update = fake;
            }
            break;
        }
        case AttackKind::minmax:
        case AttackKind::minsum: {
            const auto fake = spec.kind == AttackKind::minmax ? poison_minmax(view) : poison_minsum(view);
            for (auto& u : uploads) {
                if (u.malicious) u.update = fake.update;
            }
            break;
        }
        case AttackKind::ipm: {
            const double eps = spec.ipm_epsilon.value_or(participants);
            ParamVector fake;
            if (n == m) {
                // No benign participant: the coefficient is undefined, push against the own mean.
                fake = -eps * view_mean(view);
            } else {
                ParamVector benign_sum(uploads.front().update.dim());
                if (spec.knowledge == Knowledge::full) {
                    for (const auto& u : uploads) {
                        if (!u.malicious) benign_sum += u.update;
                    }
                } else {
                    // Partial knowledge: the malicious clients' own honest mean stands in for
                    // the benign mean.
                    benign_sum = static_cast<double>(n - m) * view_mean(view);
                }
                fake = poison_ipm(benign_sum, n, m, eps);
            }
            for (auto& u : uploads) {
                if (u.malicious) u.update = fake;
            }
            break;
        }
        case AttackKind::none:
        case AttackKind::lf:
            break;
    }
    return uploads;
}

}  // namespace fedcap
