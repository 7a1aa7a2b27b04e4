#pragma once

#include "fedcap/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace fedcap {

struct DatasetSpec {
    std::size_t num_classes = 10;
    std::size_t input_dim = 16;
    std::size_t samples_per_client = 200;
    double class_separation = 3.0;  // pairwise centroid distance
    double noise_std = 1.0;

    void validate() const;
};

/// Balanced Gaussian clusters: label of sample i is i % C, class centroids are
/// seeded orthonormal directions scaled so that every pair of centroids is
/// class_separation apart (when C <= input_dim).
Batch generate(const DatasetSpec& spec, std::size_t pool_size, std::uint64_t seed);

/// Centroids used by generate() for the given seed, row-major (C x D).
std::vector<double> class_centroids(const DatasetSpec& spec, std::uint64_t seed);

enum class PartitionScheme { pathological, dominant_mix, iid };

struct PartitionPlan {
    PartitionScheme scheme = PartitionScheme::pathological;
    std::size_t num_clients = 20;
    std::size_t classes_per_client = 2;  // pathological
    double dominant_fraction = 0.8;      // dominant_mix
    std::size_t num_groups = 3;          // dominant_mix
    double split_ratio = 0.75;           // train share

    void validate(std::size_t num_classes) const;
};

struct ClientShard {
    int client_id = 0;
    Batch train;
    Batch test;
    std::vector<std::size_t> train_indices;  // into the pool
    std::vector<std::size_t> test_indices;
    /// Classes this client was built around: its pathological classes or its
    /// dominant group; empty for iid. Clients with equal values are twins.
    std::vector<int> profile;
    /// dominant_mix only: samples drawn for the dominant portion.
    std::size_t dominant_draws = 0;
};

struct Partition {
    std::vector<ClientShard> clients;
    std::vector<std::size_t> unused;  // pool indices not given to any client
};

Partition partition(const Batch& pool, const DatasetSpec& spec, const PartitionPlan& plan,
                    std::uint64_t seed);

/// n samples drawn uniformly (seeded) from the pool indices in `available`.
Batch draw_root_shard(const Batch& pool, const std::vector<std::size_t>& available,
                      std::size_t n, std::uint64_t seed);

/// One row per sample: client_id,split,label,x0,...,x{D-1}
void export_shards_csv(std::ostream& out, const std::vector<ClientShard>& shards);

}  // namespace fedcap
