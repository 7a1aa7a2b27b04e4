#pragma once

#include "fedcap/attacks.hpp"
#include "fedcap/client.hpp"
#include "fedcap/data.hpp"
#include "fedcap/metrics.hpp"
#include "fedcap/server.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedcap {

enum class Method { fedcap, mean, multikrum, median, rfa, trimmed, clusteredfl, fltrust };
enum class Wrapper { none, bucketing, gas };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);
Wrapper parse_wrapper(std::string_view name);
std::string_view to_string(Wrapper w);

struct ExperimentConfig {
    DatasetSpec dataset;
    PartitionPlan plan;
    std::size_t hidden_dim = 16;

    std::size_t rounds = 50;
    double participation_ratio = 1.0;
    LocalConfig local;

    Method method = Method::fedcap;
    Wrapper wrapper = Wrapper::none;
    std::size_t bucket_size = 2;
    std::size_t gas_parts = 10;
    /// M for Multi-Krum (Q = N - M) and trimmed mean (Q = floor(M/2)); unset
    /// means round(p_atk * participants).
    std::optional<std::size_t> assumed_malicious;
    std::size_t root_shard_size = 100;

    CustomizationParams fedcap;
    AttackSpec attack;
    /// Root of the attack stream; unset uses the run seed.
    std::optional<std::uint64_t> attack_seed;

    ModelChoice tacc_choice = ModelChoice::best_of_both;
    double target_accuracy = 0.8;

    std::uint64_t seed = 1;
    std::string output_dir = "runs/default";

    ModelArch arch() const {
        return {dataset.input_dim, hidden_dim, dataset.num_classes};
    }
    void validate() const;
};

/// Parses the INI-style text: [section] headers, key = value lines, '#' or
/// ';' comments. Keys not listed in the schema are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets one field addressed as "section.key" from its text form.
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);

/// Canonical text of every field, in schema order. Parsing it back yields an
/// equal configuration.
std::string to_config_text(const ExperimentConfig& cfg);

/// Every "section.key" the schema accepts, in schema order.
std::vector<std::string> config_keys();

/// Sweep grid: ordered (dotted key, candidate values) pairs.
using SweepGrid = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Same sections and keys as the config file; values are comma-separated lists.
SweepGrid parse_sweep(const std::string& text);
SweepGrid load_sweep(const std::filesystem::path& path);

}  // namespace fedcap
