#include "fedcap/metrics.hpp"

#include "fedcap/errors.hpp"

#include <fmt/format.h>

namespace fedcap {

ConfusionCounts confusion(const std::set<ClientId>& malicious, const std::set<ClientId>& flagged,
                          std::size_t num_clients) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < num_clients; ++i) {
        const auto id = static_cast<ClientId>(i);
        const bool bad = malicious.contains(id);
        const bool hit = flagged.contains(id);
        if (bad && hit) ++c.tp;
        if (bad && !hit) ++c.fn;
        if (!bad && hit) ++c.fp;
        if (!bad && !hit) ++c.tn;
    }
    return c;
}

DetectionMetrics detection_metrics(const ConfusionCounts& c) {
    auto pct = [](std::size_t num, std::size_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return 100.0 * static_cast<double>(num) / static_cast<double>(den);
    };
    return {pct(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn), pct(c.fp, c.fp + c.tn), pct(c.fn, c.fn + c.tp)};
}

ModelChoice parse_model_choice(std::string_view name) {
    if (name == "customized") return ModelChoice::customized;
    if (name == "personalized") return ModelChoice::personalized;
    if (name == "best") return ModelChoice::best_of_both;
    throw ConfigError(fmt::format("unknown model choice '{}'", name));
}

double tacc(const RoundReport& report, const std::set<ClientId>& benign, ModelChoice choice) {
    double sum_c = 0.0, sum_p = 0.0;
    std::size_t n = 0;
    for (const auto& row : report.rows) {
        if (!benign.contains(row.id)) continue;
        sum_c += row.acc_customized;
        sum_p += row.acc_personalized;
        ++n;
    }
    if (n == 0) throw ConfigError(fmt::format("round {} has no benign clients to score", report.round));
    const double mean_c = sum_c / static_cast<double>(n);
    const double mean_p = sum_p / static_cast<double>(n);
    switch (choice) {
        case ModelChoice::customized: return mean_c;
        case ModelChoice::personalized: return mean_p;
        case ModelChoice::best_of_both: return std::max(mean_c, mean_p);
    }
    return mean_c;
}

double tacc(const std::vector<RoundReport>& reports, const std::set<ClientId>& benign,
            ModelChoice choice) {
    if (reports.empty()) throw ConfigError("no round reports");
    return tacc(reports.back(), benign, choice);
}

std::vector<double> tacc_series(const std::vector<RoundReport>& reports,
                                const std::set<ClientId>& benign, ModelChoice choice) {
    std::vector<double> out;
    out.reserve(reports.size());
    for (const auto& r : reports) out.push_back(tacc(r, benign, choice));
    return out;
}

std::optional<std::size_t> r2acc(const std::vector<double>& series, double target) {
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i] >= target) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> r2acc(const std::vector<RoundReport>& reports,
                                 const std::set<ClientId>& benign, ModelChoice choice,
                                 double target) {
    const auto idx = r2acc(tacc_series(reports, benign, choice), target);
    if (!idx) return std::nullopt;
    return reports[*idx].round;
}

}  // namespace fedcap
