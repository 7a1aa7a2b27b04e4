#pragma once

#include "fedcap/report.hpp"

#include <optional>
#include <set>
#include <string_view>
#include <vector>

namespace fedcap {

struct ConfusionCounts {
    std::size_t tp = 0;  // malicious, flagged
    std::size_t fp = 0;  // benign, flagged
    std::size_t tn = 0;  // benign, passed
    std::size_t fn = 0;  // malicious, passed
};

/// Counts over client ids [0, num_clients).
ConfusionCounts confusion(const std::set<ClientId>& malicious, const std::set<ClientId>& flagged,
                          std::size_t num_clients);

/// Percentages; nullopt where the denominator is empty.
struct DetectionMetrics {
    std::optional<double> dacc;
    std::optional<double> fpr;
    std::optional<double> fnr;
};

DetectionMetrics detection_metrics(const ConfusionCounts& counts);

enum class ModelChoice { customized, personalized, best_of_both };

ModelChoice parse_model_choice(std::string_view name);

/// Mean accuracy over the benign clients present in `report`. best_of_both
/// picks whichever family has the higher mean, not per-client maxima.
double tacc(const RoundReport& report, const std::set<ClientId>& benign, ModelChoice choice);

/// tacc of the last report.
double tacc(const std::vector<RoundReport>& reports, const std::set<ClientId>& benign,
            ModelChoice choice);

std::vector<double> tacc_series(const std::vector<RoundReport>& reports,
                                const std::set<ClientId>& benign, ModelChoice choice);

/// Position of the first value >= target.
std::optional<std::size_t> r2acc(const std::vector<double>& series, double target);

/// Round number of the first report whose TAcc reaches target.
std::optional<std::size_t> r2acc(const std::vector<RoundReport>& reports,
                                 const std::set<ClientId>& benign, ModelChoice choice,
                                 double target);

}  // namespace fedcap
