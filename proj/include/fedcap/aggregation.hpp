#pragma once

#include "fedcap/client.hpp"
#include "fedcap/param_vector.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace fedcap {

/// One client's contribution to a baseline aggregation round. `weight` is the
/// client's share |D_k|/|D| for weight-aware rules and ignored otherwise.
struct WeightedUpdate {
    ClientId id = 0;
    ParamVector update;
    double weight = 1.0;
};

using Updates = std::vector<WeightedUpdate>;
using Aggregator = std::function<ParamVector(const Updates&)>;

// Every rule below first sorts its input by client id, so results are
// bit-identical under any permutation of the input.

/// Weighted average; weights must be non-negative and sum to 1 (1e-9).
ParamVector agg_mean(const Updates& updates);

/// Coordinate-wise median; mean of the two middle values for even counts.
ParamVector agg_median(const Updates& updates);

/// Coordinate-wise mean after dropping the q largest and q smallest values.
ParamVector agg_trimmed_mean(const Updates& updates, std::size_t q);

/// Krum score per update (input order after id sort): sum of squared
/// distances to its n - m - 2 nearest other updates.
std::vector<double> krum_scores(const Updates& updates, std::size_t assumed_malicious);

/// Ids of the q lowest-scoring updates, ties to the lower id.
std::vector<ClientId> multikrum_selection(const Updates& updates, std::size_t assumed_malicious,
                                          std::size_t q);

/// Plain average of the multikrum selection.
ParamVector agg_multikrum(const Updates& updates, std::size_t assumed_malicious, std::size_t q);

struct WeiszfeldOptions {
    double distance_floor = 1e-8;
    std::size_t max_iterations = 1000;
    double tolerance = 1e-9;
};

/// Weighted geometric median by Weiszfeld iteration, started at the weighted mean.
ParamVector agg_rfa(const Updates& updates, const WeiszfeldOptions& opts = {});

/// sum_i w_i ||z - u_i|| with weights normalized to sum 1.
double geometric_median_objective(const Updates& updates, const ParamVector& z);

struct ClusteringResult {
    ParamVector aggregate;
    std::vector<ClientId> flagged;
    std::vector<ClientId> kept;
};

/// Complete-linkage agglomerative clustering on pairwise cosine similarity
/// down to two clusters; the smaller cluster is flagged and the weighted
/// mean of the larger one returned.
ClusteringResult agg_clusteredfl(const Updates& updates);

/// Cosine-trust weighted average of updates rescaled to ||server_update||.
ParamVector agg_fltrust(const Updates& updates, const ParamVector& server_update);

/// Seeded shuffle into ceil(n/s) buckets, bucket averages, then `inner`.
ParamVector wrap_bucketing(const Updates& updates, std::size_t bucket_size,
                           const Aggregator& inner, std::uint64_t seed);

struct GasResult {
    ParamVector aggregate;
    std::vector<double> scores;         // id-sorted order
    std::vector<ClientId> selected;     // ceil(n/2) lowest scores
};

/// Splits updates into p contiguous sub-vectors, scores each client by its
/// summed distance to the per-chunk `inner` aggregate, and averages the
/// ceil(n/2) lowest-scoring clients' full updates.
GasResult gas_aggregate(const Updates& updates, std::size_t parts, const Aggregator& inner);
ParamVector wrap_gas(const Updates& updates, std::size_t parts, const Aggregator& inner);

/// Chunk boundaries for splitting `dim` into `parts` contiguous pieces.
std::vector<std::size_t> chunk_offsets(std::size_t dim, std::size_t parts);

}  // namespace fedcap
