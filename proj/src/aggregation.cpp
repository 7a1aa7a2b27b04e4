#include "fedcap/aggregation.hpp"

#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedcap {

namespace {

Updates sorted_by_id(const Updates& updates) {
    if (updates.empty()) throw ConfigError("aggregation over an empty update set");
    Updates out = updates;
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.id < b.id; });
    for (const auto& u : out) require_same_dim(u.update, out.front().update);
    return out;
}

ParamVector plain_mean(const Updates& updates) {
    ParamVector out(updates.front().update.dim());
    for (const auto& u : updates) out += u.update;
    out *= 1.0 / static_cast<double>(updates.size());
    return out;
}

ParamVector renormalized_mean(const Updates& updates) {
    double total = 0.0;
    for (const auto& u : updates) total += u.weight;
    if (!(total > 0.0)) return plain_mean(updates);
    ParamVector out(updates.front().update.dim());
    for (const auto& u : updates) out.axpy(u.weight / total, u.update);
    return out;
}

template <typename Reduce>
ParamVector coordinatewise(const Updates& updates, Reduce reduce) {
    const std::size_t dim = updates.front().update.dim();
    ParamVector out(dim);
    std::vector<double> column(updates.size());
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < updates.size(); ++i) column[i] = updates[i].update[j];
        std::sort(column.begin(), column.end());
        out[j] = reduce(column);
    }
    return out;
}

}  // namespace

ParamVector agg_mean(const Updates& input) {
    const Updates updates = sorted_by_id(input);
    double total = 0.0;
    for (const auto& u : updates) {
        if (!(u.weight >= 0.0)) throw ConfigError("aggregation weights must be non-negative");
        total += u.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError(fmt::format("aggregation weights sum to {}, expected 1", total));
    }
    ParamVector out(updates.front().update.dim());
    for (const auto& u : updates) out.axpy(u.weight, u.update);
    return out;
}

ParamVector agg_median(const Updates& input) {
    const Updates updates = sorted_by_id(input);
    return coordinatewise(updates, [](const std::vector<double>& col) {
        const std::size_t n = col.size();
        return n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    });
}

ParamVector agg_trimmed_mean(const Updates& input, std::size_t q) {
    const Updates updates = sorted_by_id(input);
    if (2 * q >= updates.size()) {
        throw ConfigError(fmt::format("trimmed mean needs 2Q < n (Q={}, n={})", q, updates.size()));
    }
    return coordinatewise(updates, [q](const std::vector<double>& col) {
        double s = 0.0;
        for (std::size_t i = q; i < col.size() - q; ++i) s += col[i];
        return s / static_cast<double>(col.size() - 2 * q);
    });
}

std::vector<double> krum_scores(const Updates& input, std::size_t assumed_malicious) {
    const Updates updates = sorted_by_id(input);
    const std::size_t n = updates.size();
    if (n < assumed_malicious + 3) {
        throw ConfigError(fmt::format("Krum needs n - m - 2 >= 1 (n={}, m={})", n, assumed_malicious));
    }
    const std::size_t neighbours = n - assumed_malicious - 2;
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dist[i][j] = dist[j][i] = squared_distance(updates[i].update, updates[j].update);
        }
    }
    std::vector<double> scores(n);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back(dist[i][j]);
        }
        std::sort(row.begin(), row.end());
        scores[i] = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
    }
    return scores;
}

std::vector<ClientId> multikrum_selection(const Updates& input, std::size_t assumed_malicious,
                                          std::size_t q) {
    const Updates updates = sorted_by_id(input);
    if (q == 0 || q > updates.size()) throw ConfigError("multi-krum Q must be in [1, n]");
    const auto scores = krum_scores(updates, assumed_malicious);
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<ClientId> out;
    for (std::size_t i = 0; i < q; ++i) out.push_back(updates[order[i]].id);
    std::sort(out.begin(), out.end());
    return out;
}

ParamVector agg_multikrum(const Updates& input, std::size_t assumed_malicious, std::size_t q) {
    const Updates updates = sorted_by_id(input);
    const auto selected = multikrum_selection(updates, assumed_malicious, q);
    Updates chosen;
    for (const auto& u : updates) {
        if (std::binary_search(selected.begin(), selected.end(), u.id)) chosen.push_back(u);
    }
    return plain_mean(chosen);
}

double geometric_median_objective(const Updates& updates, const ParamVector& z) {
    double total = 0.0;
    for (const auto& u : updates) total += u.weight;
    double obj = 0.0;
    for (const auto& u : updates) obj += (u.weight / total) * distance(z, u.update);
    return obj;
}

ParamVector agg_rfa(const Updates& input, const WeiszfeldOptions& opts) {
    const Updates updates = sorted_by_id(input);
    double total = 0.0;
    for (const auto& u : updates) {
        if (!(u.weight >= 0.0)) throw ConfigError("RFA weights must be non-negative");
        total += u.weight;
    }
    if (!(total > 0.0)) throw ConfigError("RFA weights sum to zero");

    ParamVector z = renormalized_mean(updates);
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        ParamVector next(z.dim());
        double denom = 0.0;
        for (const auto& u : updates) {
            const double beta = (u.weight / total) / std::max(opts.distance_floor, distance(z, u.update));
            next.axpy(beta, u.update);
            denom += beta;
        }
        next *= 1.0 / denom;
        const double moved = distance(next, z);
        z = std::move(next);
        if (moved < opts.tolerance) break;
    }
    // Weiszfeld converges sublinearly when the median sits on an input point.
    double best = geometric_median_objective(updates, z);
    for (const auto& u : updates) {
        const double f = geometric_median_objective(updates, u.update);
        if (f < best) {
            best = f;
            z = u.update;
        }
    }
    return z;
}

ClusteringResult agg_clusteredfl(const Updates& input) {
    const Updates updates = sorted_by_id(input);
    const std::size_t n = updates.size();
    ClusteringResult result;

    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
    double min_sim = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sim[i][j] = sim[j][i] = cosine(updates[i].update, updates[j].update);
            min_sim = std::min(min_sim, sim[i][j]);
        }
    }
    if (n < 2 || min_sim >= 1.0 - 1e-12) {
        result.aggregate = renormalized_mean(updates);
        for (const auto& u : updates) result.kept.push_back(u.id);
        return result;
    }

    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters.push_back({i});
    auto linkage = [&](const auto& a, const auto& b) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i : a) {
            for (std::size_t j : b) m = std::min(m, sim[i][j]);
        }
        return m;
    };
    while (clusters.size() > 2) {
        std::size_t best_a = 0, best_b = 1;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < clusters.size(); ++a) {
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                const double l = linkage(clusters[a], clusters[b]);
                if (l > best) {
                    best = l;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        clusters[best_a].insert(clusters[best_a].end(), clusters[best_b].begin(), clusters[best_b].end());
        std::sort(clusters[best_a].begin(), clusters[best_a].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
    }

    auto internal_similarity = [&](const std::vector<std::size_t>& c) {
        if (c.size() < 2) return 1.0;
        double s = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            for (std::size_t j = i + 1; j < c.size(); ++j) {
                s += sim[c[i]][c[j]];
                ++pairs;
            }
        }
        return s / static_cast<double>(pairs);
    };

    std::size_t flagged = 1;
    if (clusters[0].size() < clusters[1].size()) {
        flagged = 0;
    } else if (clusters[0].size() == clusters[1].size()) {
        flagged = internal_similarity(clusters[0]) < internal_similarity(clusters[1]) ? 0 : 1;
    }
    Updates kept;
    for (std::size_t i : clusters[1 - flagged]) {
        kept.push_back(updates[i]);
        result.kept.push_back(updates[i].id);
    }
    for (std::size_t i : clusters[flagged]) result.flagged.push_back(updates[i].id);
    std::sort(result.kept.begin(), result.kept.end());
    std::sort(result.flagged.begin(), result.flagged.end());
    result.aggregate = renormalized_mean(kept);
    return result;
}

ParamVector agg_fltrust(const Updates& input, const ParamVector& server_update) {
    const Updates updates = sorted_by_id(input);
    const double root_norm = norm(server_update);
    ParamVector out(server_update.dim());
    double trust_total = 0.0;
    for (const auto& u : updates) {
        const double trust = std::max(0.0, cosine(u.update, server_update));
        const double n = norm(u.update);
        if (trust == 0.0 || n == 0.0) continue;
        out.axpy(trust * root_norm / n, u.update);
        trust_total += trust;
    }
    if (trust_total == 0.0) return server_update;
    out *= 1.0 / trust_total;
    return out;
}

ParamVector wrap_bucketing(const Updates& input, std::size_t bucket_size, const Aggregator& inner,
                           std::uint64_t seed) {
    if (bucket_size == 0) throw ConfigError("bucket size must be positive");
    const Updates updates = sorted_by_id(input);
    if (bucket_size == 1) return inner(updates);

    Rng rng(seed);
    const auto order = permutation(updates.size(), rng);
    Updates buckets;
    for (std::size_t start = 0; start < order.size(); start += bucket_size) {
        const std::size_t stop = std::min(order.size(), start + bucket_size);
        Updates members;
        for (std::size_t i = start; i < stop; ++i) members.push_back(updates[order[i]]);
        WeightedUpdate b;
        b.id = members.front().id;
        b.weight = 0.0;
        for (const auto& m : members) {
            b.id = std::min(b.id, m.id);
            b.weight += m.weight;
        }
        b.update = plain_mean(members);
        buckets.push_back(std::move(b));
    }
    if (buckets.size() == 1) return buckets.front().update;
    return inner(buckets);
}

std::vector<std::size_t> chunk_offsets(std::size_t dim, std::size_t parts) {
    if (parts == 0 || parts > dim) {
        throw ConfigError(fmt::format("cannot split dim {} into {} sub-vectors", dim, parts));
    }
    std::vector<std::size_t> offsets{0};
    for (std::size_t p = 0; p < parts; ++p) {
        offsets.push_back(offsets.back() + dim / parts + (p < dim % parts ? 1 : 0));
    }
    return offsets;
}

GasResult gas_aggregate(const Updates& input, std::size_t parts, const Aggregator& inner) {
    const Updates updates = sorted_by_id(input);
    const std::size_t n = updates.size();
    const auto offsets = chunk_offsets(updates.front().update.dim(), parts);

    GasResult result;
    result.scores.assign(n, 0.0);
    for (std::size_t p = 0; p < parts; ++p) {
        Updates sub;
        for (const auto& u : updates) {
            std::vector<double> piece(u.update.raw().begin() + static_cast<std::ptrdiff_t>(offsets[p]),
                                      u.update.raw().begin() + static_cast<std::ptrdiff_t>(offsets[p + 1]));
            sub.push_back({u.id, ParamVector(std::move(piece)), u.weight});
        }
        const ParamVector agg = inner(sub);
        for (std::size_t i = 0; i < n; ++i) result.scores[i] += distance(sub[i].update, agg);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return result.scores[a] < result.scores[b]; });
    const std::size_t keep = (n + 1) / 2;
    Updates chosen;
    for (std::size_t i = 0; i < keep; ++i) result.selected.push_back(updates[order[i]].id);
    std::sort(result.selected.begin(), result.selected.end());
    for (const auto& u : updates) {
        if (std::binary_search(result.selected.begin(), result.selected.end(), u.id)) chosen.push_back(u);
    }
    result.aggregate = plain_mean(chosen);
    return result;
}

ParamVector wrap_gas(const Updates& updates, std::size_t parts, const Aggregator& inner) {
    return gas_aggregate(updates, parts, inner).aggregate;
}

}  // namespace fedcap
