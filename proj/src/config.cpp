#include "tplscan/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"

namespace tplscan {

using nlohmann::json;

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid config " + path + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }

    Config cfg;
    const std::set<std::string> known = {
        "db_path", "model_path", "corpus_path",
        "neighbors_per_function", "unit_cap",
        "channel_a_edge_threshold", "channel_b_edge_threshold",
        "pairing_cosine_threshold", "string_proportion_threshold",
        "weight_sum_threshold", "weight_proportion_threshold",
        "export_count_threshold", "min_string_length",
        "vd_major_weight", "vd_minor_weight", "vd_patch_weight",
        "seed", "output_format", "channels", "strict", "timeout_minutes",
        "train_epochs", "train_batch_size", "train_learning_rate",
        "embed_dim", "iterations", "mining_rounds", "mining_threshold"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }

    auto get = [&](const char* key, auto& slot) {
        if (auto it = doc.find(key); it != doc.end()) {
            try {
                slot = it->get<std::decay_t<decltype(slot)>>();
            } catch (const json::exception&) {
                throw ConfigError(std::string("bad value for config key '") +
                                  key + "'");
            }
        }
    };
    get("db_path", cfg.db_path);
    get("model_path", cfg.model_path);
    get("corpus_path", cfg.corpus_path);
    get("neighbors_per_function", cfg.retrieval.neighbors_per_function);
    get("unit_cap", cfg.retrieval.unit_cap);
    get("channel_a_edge_threshold", cfg.retrieval.channel_a_edge_threshold);
    get("channel_b_edge_threshold", cfg.retrieval.channel_b_edge_threshold);
    get("pairing_cosine_threshold", cfg.retrieval.pairing_cosine_threshold);
    get("string_proportion_threshold",
        cfg.retrieval.string_proportion_threshold);
    get("weight_sum_threshold", cfg.retrieval.weight_sum_threshold);
    get("weight_proportion_threshold",
        cfg.retrieval.weight_proportion_threshold);
    get("export_count_threshold", cfg.retrieval.export_count_threshold);
    get("min_string_length", cfg.min_string_length);
    get("vd_major_weight", cfg.vd_weights.major);
    get("vd_minor_weight", cfg.vd_weights.minor);
    get("vd_patch_weight", cfg.vd_weights.patch);
    get("seed", cfg.seed);
    get("output_format", cfg.output_format);
    get("channels", cfg.channels);
    get("strict", cfg.strict);
    get("timeout_minutes", cfg.timeout_minutes);
    get("train_epochs", cfg.train_epochs);
    get("train_batch_size", cfg.train_batch_size);
    get("train_learning_rate", cfg.train_learning_rate);
    get("embed_dim", cfg.embed_dim);
    get("iterations", cfg.iterations);
    get("mining_rounds", cfg.mining_rounds);
    get("mining_threshold", cfg.mining_threshold);

    cfg.validate();
    return cfg;
}

void Config::validate() const {
    if (retrieval.neighbors_per_function < 1 || retrieval.unit_cap < 1 ||
        retrieval.channel_a_edge_threshold < 1 ||
        retrieval.channel_b_edge_threshold < 1) {
        throw ConfigError("retrieval counts and thresholds must be positive");
    }
    if (retrieval.pairing_cosine_threshold <= 0.0 ||
        retrieval.pairing_cosine_threshold >= 1.0) {
        throw ConfigError("pairing_cosine_threshold must be in (0, 1)");
    }
    if (output_format != "json" && output_format != "text") {
        throw ConfigError("output_format must be 'json' or 'text'");
    }
    if (channels != "basic" && channels != "fr" && channels != "both") {
        throw ConfigError("channels must be 'basic', 'fr' or 'both'");
    }
    if (timeout_minutes < 0.0) {
        throw ConfigError("timeout_minutes must be non-negative");
    }
    if (train_epochs < 1 || train_batch_size < 1 ||
        train_learning_rate <= 0.0 || embed_dim < 1 || iterations < 0 ||
        mining_rounds < 0 || mining_threshold <= 0.0 ||
        mining_threshold >= 1.0) {
        throw ConfigError("invalid training configuration");
    }
}

}  // namespace tplscan
