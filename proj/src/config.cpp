#include "fedcap/config.hpp"

#include "fedcap/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedcap {

Method parse_method(std::string_view name) {
    if (name == "fedcap") return Method::fedcap;
    if (name == "mean") return Method::mean;
    if (name == "multikrum") return Method::multikrum;
    if (name == "median") return Method::median;
    if (name == "rfa") return Method::rfa;
    if (name == "trimmed") return Method::trimmed;
    if (name == "clusteredfl") return Method::clusteredfl;
    if (name == "fltrust") return Method::fltrust;
    throw ConfigError(fmt::format("unknown method '{}'", name));
}

std::string_view to_string(Method m) {
    switch (m) {
        case Method::fedcap: return "fedcap";
        case Method::mean: return "mean";
        case Method::multikrum: return "multikrum";
        case Method::median: return "median";
        case Method::rfa: return "rfa";
        case Method::trimmed: return "trimmed";
        case Method::clusteredfl: return "clusteredfl";
        case Method::fltrust: return "fltrust";
    }
    return "fedcap";
}

Wrapper parse_wrapper(std::string_view name) {
    if (name == "none") return Wrapper::none;
    if (name == "bucketing") return Wrapper::bucketing;
    if (name == "gas") return Wrapper::gas;
    throw ConfigError(fmt::format("unknown wrapper '{}'", name));
}

std::string_view to_string(Wrapper w) {
    switch (w) {
        case Wrapper::none: return "none";
        case Wrapper::bucketing: return "bucketing";
        case Wrapper::gas: return "gas";
    }
    return "none";
}

namespace {

std::string_view to_string(PartitionScheme s) {
    switch (s) {
        case PartitionScheme::pathological: return "pathological";
        case PartitionScheme::dominant_mix: return "dominant_mix";
        case PartitionScheme::iid: return "iid";
    }
    return "pathological";
}

PartitionScheme parse_scheme(std::string_view name) {
    if (name == "pathological") return PartitionScheme::pathological;
    if (name == "dominant_mix") return PartitionScheme::dominant_mix;
    if (name == "iid") return PartitionScheme::iid;
    throw ConfigError(fmt::format("unknown partition scheme '{}'", name));
}

std::string_view to_string(ModelChoice c) {
    switch (c) {
        case ModelChoice::customized: return "customized";
        case ModelChoice::personalized: return "personalized";
        case ModelChoice::best_of_both: return "best";
    }
    return "best";
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
    }
    return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, text));
    }
    return v;
}

std::size_t to_size(const std::string& key, const std::string& text) {
    return static_cast<std::size_t>(to_u64(key, text));
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
std::string show(const T& v) {
    return fmt::format("{}", v);
}

template <typename T>
std::string show_opt(const std::optional<T>& v) {
    return v ? fmt::format("{}", *v) : std::string("auto");
}

// Member pointer helpers keep the schema table compact.
#define FC_DOUBLE(sec, name, member)                                                           \
    Field{sec, name, [](ExperimentConfig& c, const std::string& k, const std::string& v) {     \
              c.member = to_double(k, v);                                                      \
          },                                                                                   \
          [](const ExperimentConfig& c) { return show(c.member); }}
#define FC_SIZE(sec, name, member)                                                             \
    Field{sec, name, [](ExperimentConfig& c, const std::string& k, const std::string& v) {     \
              c.member = to_size(k, v);                                                        \
          },                                                                                   \
          [](const ExperimentConfig& c) { return show(c.member); }}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = {
        FC_SIZE("data", "num_classes", dataset.num_classes),
        FC_SIZE("data", "input_dim", dataset.input_dim),
        FC_SIZE("data", "samples_per_client", dataset.samples_per_client),
        FC_DOUBLE("data", "class_separation", dataset.class_separation),
        FC_DOUBLE("data", "noise_std", dataset.noise_std),
        Field{"data", "scheme",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.plan.scheme = parse_scheme(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.plan.scheme)); }},
        FC_SIZE("data", "num_clients", plan.num_clients),
        FC_SIZE("data", "classes_per_client", plan.classes_per_client),
        FC_DOUBLE("data", "dominant_fraction", plan.dominant_fraction),
        FC_SIZE("data", "num_groups", plan.num_groups),
        FC_DOUBLE("data", "split_ratio", plan.split_ratio),

        FC_SIZE("model", "hidden_dim", hidden_dim),

        FC_SIZE("training", "rounds", rounds),
        FC_DOUBLE("training", "participation_ratio", participation_ratio),
        FC_SIZE("training", "epochs", local.epochs),
        FC_SIZE("training", "batch_size", local.batch_size),
        FC_DOUBLE("training", "lr", local.lr),
        FC_DOUBLE("training", "lambda", local.lambda),

        Field{"method", "name",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.method = parse_method(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.method)); }},
        Field{"method", "wrapper",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.wrapper = parse_wrapper(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.wrapper)); }},
        FC_SIZE("method", "bucket_size", bucket_size),
        FC_SIZE("method", "gas_parts", gas_parts),
        Field{"method", "assumed_malicious",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  if (v == "auto") c.assumed_malicious.reset();
                  else c.assumed_malicious = to_size(k, v);
              },
              [](const ExperimentConfig& c) { return show_opt(c.assumed_malicious); }},
        FC_SIZE("method", "root_shard_size", root_shard_size),

        FC_DOUBLE("fedcap", "alpha", fedcap.alpha),
        FC_DOUBLE("fedcap", "phi", fedcap.phi),
        FC_DOUBLE("fedcap", "t_norm", fedcap.t_norm),

        Field{"attack", "kind",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.attack.kind = parse_attack_kind(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.attack.kind)); }},
        FC_DOUBLE("attack", "malicious_fraction", attack.malicious_fraction),
        Field{"attack", "mr_scale",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  if (v == "auto") c.attack.mr_scale.reset();
                  else c.attack.mr_scale = to_double(k, v);
              },
              [](const ExperimentConfig& c) { return show_opt(c.attack.mr_scale); }},
        Field{"attack", "ipm_epsilon",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  if (v == "auto") c.attack.ipm_epsilon.reset();
                  else c.attack.ipm_epsilon = to_double(k, v);
              },
              [](const ExperimentConfig& c) { return show_opt(c.attack.ipm_epsilon); }},
        Field{"attack", "knowledge",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.attack.knowledge = parse_knowledge(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.attack.knowledge)); }},
        Field{"attack", "seed",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  if (v == "auto") c.attack_seed.reset();
                  else c.attack_seed = to_u64(k, v);
              },
              [](const ExperimentConfig& c) { return show_opt(c.attack_seed); }},

        Field{"metrics", "tacc_model",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.tacc_choice = parse_model_choice(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.tacc_choice)); }},
        FC_DOUBLE("metrics", "target_accuracy", target_accuracy),

        Field{"run", "seed",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
              [](const ExperimentConfig& c) { return show(c.seed); }},
        Field{"run", "output_dir",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
              [](const ExperimentConfig& c) { return c.output_dir; }},
    };
    return fields;
}

#undef FC_DOUBLE
#undef FC_SIZE

const Field& find_field(const std::string& dotted) {
    for (const auto& f : schema()) {
        if (f.section + "." + f.key == dotted) return f;
    }
    throw ConfigError(fmt::format("unknown config key '{}'", dotted));
}

boost::property_tree::ptree read_ini(const std::string& text) {
    std::istringstream in(text);
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(fmt::format("config parse error at line {}: {}", e.line(), e.message()));
    }
    return tree;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void ExperimentConfig::validate() const {
    dataset.validate();
    plan.validate(dataset.num_classes);
    local.validate();
    fedcap.validate();
    attack.validate();
    if (rounds < 1) throw ConfigError("rounds must be at least 1");
    if (!(participation_ratio > 0.0 && participation_ratio <= 1.0)) {
        throw ConfigError("participation_ratio must be in (0, 1]");
    }
    if (method == Method::fedcap && wrapper != Wrapper::none) {
        throw ConfigError("wrappers apply to baseline aggregators only, not fedcap");
    }
    if (wrapper != Wrapper::none &&
        (method == Method::clusteredfl || method == Method::fltrust)) {
        throw ConfigError(fmt::format("wrapper '{}' cannot wrap '{}'", to_string(wrapper), to_string(method)));
    }
    if (bucket_size == 0) throw ConfigError("bucket_size must be positive");
    if (gas_parts == 0) throw ConfigError("gas_parts must be positive");
    if (wrapper == Wrapper::gas && gas_parts > arch().param_count()) {
        throw ConfigError("gas_parts exceeds the model dimension");
    }
    if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0)) {
        throw ConfigError("target_accuracy must be in [0, 1]");
    }
}

void apply_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
    find_field(dotted_key).set(cfg, dotted_key, trim(value));
}

ExperimentConfig parse_config(const std::string& text) {
    const auto tree = read_ini(text);
    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(fmt::format("key '{}' must be inside a [section]", section));
        }
        for (const auto& [key, value] : body) {
            apply_override(cfg, section + "." + key, value.data());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(slurp(path)); }

std::string to_config_text(const ExperimentConfig& cfg) {
    std::string out;
    std::string current;
    for (const auto& f : schema()) {
        if (f.section != current) {
            if (!current.empty()) out += '\n';
            out += "[" + f.section + "]\n";
            current = f.section;
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : schema()) out.push_back(f.section + "." + f.key);
    return out;
}

SweepGrid parse_sweep(const std::string& text) {
    const auto tree = read_ini(text);
    SweepGrid grid;
    for (const auto& [section, body] : tree) {
        for (const auto& [key, value] : body) {
            const std::string dotted = section + "." + key;
            find_field(dotted);
            std::vector<std::string> values;
            std::stringstream ss(value.data());
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (!item.empty()) values.push_back(item);
            }
            if (values.empty()) throw ConfigError(fmt::format("sweep key '{}' lists no values", dotted));
            grid.emplace_back(dotted, std::move(values));
        }
    }
    return grid;
}

SweepGrid load_sweep(const std::filesystem::path& path) { return parse_sweep(slurp(path)); }

}  // namespace fedcap
