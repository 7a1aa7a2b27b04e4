#include "fedcap/data.hpp"

#include "fedcap/errors.hpp"
#include "fedcap/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace fedcap {

void DatasetSpec::validate() const {
    if (num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
    if (input_dim == 0) throw ConfigError("dataset input_dim must be positive");
    if (samples_per_client < 20) throw ConfigError("samples_per_client must be at least 20");
    if (!(class_separation > 0.0)) throw ConfigError("class_separation must be positive");
    if (!(noise_std > 0.0)) throw ConfigError("noise_std must be positive");
}

void PartitionPlan::validate(std::size_t num_classes) const {
    if (num_clients == 0) throw ConfigError("partition needs at least one client");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must be in (0,1)");
    switch (scheme) {
        case PartitionScheme::pathological:
            if (classes_per_client == 0 || classes_per_client > num_classes) {
                throw ConfigError("classes_per_client must be in [1, num_classes]");
            }
            if (classes_per_client * num_clients < num_classes) {
                throw ConfigError("pathological plan does not cover every class");
            }
            break;
        case PartitionScheme::dominant_mix:
            if (!(dominant_fraction > 0.0 && dominant_fraction < 1.0)) {
                throw ConfigError("dominant_fraction must be in (0,1)");
            }
            if (num_groups == 0 || num_groups > num_classes) {
                throw ConfigError("num_groups must be in [1, num_classes]");
            }
            break;
        case PartitionScheme::iid:
            break;
    }
}

std::vector<double> class_centroids(const DatasetSpec& spec, std::uint64_t seed) {
    const std::size_t C = spec.num_classes, D = spec.input_dim;
    Rng rng(derive_seed(seed, Stream::data, 0));
    std::vector<double> dirs(C * D);
    for (double& v : dirs) v = standard_normal(rng);
    // Gram-Schmidt over the first min(C, D) rows; any extra rows are just normalized.
    for (std::size_t c = 0; c < C; ++c) {
        double* r = dirs.data() + c * D;
        if (c < D) {
            for (std::size_t p = 0; p < c; ++p) {
                const double* q = dirs.data() + p * D;
                double proj = 0.0;
                for (std::size_t j = 0; j < D; ++j) proj += r[j] * q[j];
                for (std::size_t j = 0; j < D; ++j) r[j] -= proj * q[j];
            }
        }
        double n = 0.0;
        for (std::size_t j = 0; j < D; ++j) n += r[j] * r[j];
        n = std::sqrt(n);
        for (std::size_t j = 0; j < D; ++j) r[j] /= n;
    }
    const double scale = spec.class_separation / std::sqrt(2.0);
    for (double& v : dirs) v *= scale;
    return dirs;
}

Batch generate(const DatasetSpec& spec, std::size_t pool_size, std::uint64_t seed) {
    spec.validate();
    const std::size_t C = spec.num_classes, D = spec.input_dim;
    const auto centroids = class_centroids(spec, seed);
    Rng rng(derive_seed(seed, Stream::data, 1));
    Batch pool;
    pool.input_dim = D;
    pool.features.reserve(pool_size * D);
    pool.labels.reserve(pool_size);
    std::vector<double> x(D);
    for (std::size_t i = 0; i < pool_size; ++i) {
        const std::size_t c = i % C;
        for (std::size_t j = 0; j < D; ++j) {
            x[j] = centroids[c * D + j] + spec.noise_std * standard_normal(rng);
        }
        pool.push_back(x.data(), static_cast<int>(c));
    }
    return pool;
}

namespace {

// Splits `total` into `parts` counts that differ by at most one; the extra
// units go to parts starting at `offset` (mod parts).
std::vector<std::size_t> even_split(std::size_t total, std::size_t parts, std::size_t offset) {
    std::vector<std::size_t> out(parts, total / parts);
    for (std::size_t r = 0; r < total % parts; ++r) out[(offset + r) % parts] += 1;
    return out;
}

class ClassBuckets {
public:
    ClassBuckets(const Batch& pool, std::size_t num_classes, Rng& rng)
        : buckets_(num_classes), cursor_(num_classes, 0) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            buckets_[static_cast<std::size_t>(pool.labels[i])].push_back(i);
        }
        for (auto& b : buckets_) shuffle(b, rng);
    }

    void take(std::size_t cls, std::size_t n, std::vector<std::size_t>& out) {
        auto& b = buckets_[cls];
        if (cursor_[cls] + n > b.size()) {
            throw ConfigError(fmt::format(
                "infeasible partition: class {} needs {} more samples, pool has {} left", cls, n,
                b.size() - cursor_[cls]));
        }
        out.insert(out.end(), b.begin() + static_cast<std::ptrdiff_t>(cursor_[cls]),
                   b.begin() + static_cast<std::ptrdiff_t>(cursor_[cls] + n));
        cursor_[cls] += n;
    }

    std::vector<std::size_t> unused() const {
        std::vector<std::size_t> out;
        for (std::size_t c = 0; c < buckets_.size(); ++c) {
            out.insert(out.end(), buckets_[c].begin() + static_cast<std::ptrdiff_t>(cursor_[c]),
                       buckets_[c].end());
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::vector<std::vector<std::size_t>> buckets_;
    std::vector<std::size_t> cursor_;
};

// Stratified train/test split: the test total is round(n * (1 - ratio)) and is
// spread over classes by largest remainder, so the split is exact overall and
// per-class shares are as close to the ratio as integer counts allow.
void split_client(const Batch& pool, const std::vector<std::size_t>& indices, double ratio,
                  std::size_t num_classes, ClientShard& shard) {
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t idx : indices) by_class[static_cast<std::size_t>(pool.labels[idx])].push_back(idx);

    const double test_share = 1.0 - ratio;
    const auto test_total =
        static_cast<std::size_t>(std::llround(static_cast<double>(indices.size()) * test_share));
    std::vector<std::size_t> test_count(num_classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double ideal = static_cast<double>(by_class[c].size()) * test_share;
        test_count[c] = static_cast<std::size_t>(std::floor(ideal));
        assigned += test_count[c];
        remainders.emplace_back(ideal - std::floor(ideal), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < test_total && r < remainders.size(); ++r) {
        const std::size_t c = remainders[r].second;
        if (test_count[c] < by_class[c].size()) {
            ++test_count[c];
            ++assigned;
        }
    }

    shard.train.input_dim = pool.input_dim;
    shard.test.input_dim = pool.input_dim;
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t j = 0; j < by_class[c].size(); ++j) {
            const std::size_t idx = by_class[c][j];
            if (j < test_count[c]) {
                shard.test_indices.push_back(idx);
            } else {
                shard.train_indices.push_back(idx);
            }
        }
    }
    for (std::size_t idx : shard.train_indices) shard.train.push_back(pool.row(idx), pool.labels[idx]);
    for (std::size_t idx : shard.test_indices) shard.test.push_back(pool.row(idx), pool.labels[idx]);
}

}  // namespace

Partition partition(const Batch& pool, const DatasetSpec& spec, const PartitionPlan& plan,
                    std::uint64_t seed) {
    spec.validate();
    plan.validate(spec.num_classes);
    const std::size_t C = spec.num_classes, K = plan.num_clients, n = spec.samples_per_client;
    Rng rng(derive_seed(seed, Stream::partition, 0));
    ClassBuckets buckets(pool, C, rng);

    std::vector<std::size_t> class_perm(C);
    std::iota(class_perm.begin(), class_perm.end(), std::size_t{0});
    shuffle(class_perm, rng);

    std::vector<std::vector<std::size_t>> assigned(K);
    std::vector<std::vector<int>> profiles(K);
    std::vector<std::size_t> dominant_draws(K, 0);

    switch (plan.scheme) {
        case PartitionScheme::pathological: {
            const std::size_t cpc = plan.classes_per_client;
            for (std::size_t k = 0; k < K; ++k) {
                const auto counts = even_split(n, cpc, 0);
                for (std::size_t j = 0; j < cpc; ++j) {
                    const std::size_t cls = class_perm[(k * cpc + j) % C];
                    profiles[k].push_back(static_cast<int>(cls));
                    buckets.take(cls, counts[j], assigned[k]);
                }
                std::sort(profiles[k].begin(), profiles[k].end());
            }
            break;
        }
        case PartitionScheme::dominant_mix: {
            const auto group_sizes = even_split(C, plan.num_groups, 0);
            std::vector<std::vector<std::size_t>> groups(plan.num_groups);
            std::size_t pos = 0;
            for (std::size_t g = 0; g < plan.num_groups; ++g) {
                for (std::size_t j = 0; j < group_sizes[g]; ++j) groups[g].push_back(class_perm[pos++]);
            }
            const auto dominant =
                static_cast<std::size_t>(std::llround(plan.dominant_fraction * static_cast<double>(n)));
            for (std::size_t k = 0; k < K; ++k) {
                const auto& group = groups[k % plan.num_groups];
                const auto dom_counts = even_split(dominant, group.size(), k);
                for (std::size_t j = 0; j < group.size(); ++j) {
                    profiles[k].push_back(static_cast<int>(group[j]));
                    buckets.take(group[j], dom_counts[j], assigned[k]);
                }
                std::sort(profiles[k].begin(), profiles[k].end());
                dominant_draws[k] = dominant;
                const auto rest_counts = even_split(n - dominant, C, k);
                for (std::size_t c = 0; c < C; ++c) buckets.take(c, rest_counts[c], assigned[k]);
            }
            break;
        }
        case PartitionScheme::iid: {
            const auto per_class = even_split(K * n, C, 0);
            std::vector<std::size_t> drawn;
            for (std::size_t c = 0; c < C; ++c) buckets.take(c, per_class[c], drawn);
            for (std::size_t i = 0; i < drawn.size(); ++i) assigned[i % K].push_back(drawn[i]);
            break;
        }
    }

    Partition out;
    out.clients.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        auto& shard = out.clients[k];
        shard.client_id = static_cast<int>(k);
        shard.profile = profiles[k];
        shard.dominant_draws = dominant_draws[k];
        split_client(pool, assigned[k], plan.split_ratio, C, shard);
        if (shard.train.size() == 0 || shard.test.size() == 0) {
            throw ConfigError(fmt::format("client {} ended with an empty train or test shard", k));
        }
    }
    out.unused = buckets.unused();
    return out;
}

Batch draw_root_shard(const Batch& pool, const std::vector<std::size_t>& available,
                      std::size_t n, std::uint64_t seed) {
    if (available.size() < n) {
        throw ConfigError(fmt::format("root shard needs {} samples, only {} unused", n,
                                      available.size()));
    }
    Rng rng(seed);
    auto idx = available;
    shuffle(idx, rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return pool.select(idx);
}

void export_shards_csv(std::ostream& out, const std::vector<ClientShard>& shards) {
    out << "# fedcap-shards v1\nclient_id,split,label";
    const std::size_t dim = shards.empty() ? 0 : shards.front().train.input_dim;
    for (std::size_t j = 0; j < dim; ++j) out << ",x" << j;
    out << '\n';
    for (const auto& shard : shards) {
        auto emit = [&](const Batch& b, const char* split) {
            for (std::size_t i = 0; i < b.size(); ++i) {
                out << shard.client_id << ',' << split << ',' << b.labels[i];
                const double* x = b.row(i);
                for (std::size_t j = 0; j < b.input_dim; ++j) out << ',' << fmt::format("{:.17g}", x[j]);
                out << '\n';
            }
        };
        emit(shard.train, "train");
        emit(shard.test, "test");
    }
}

}  // namespace fedcap
