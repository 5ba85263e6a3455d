#pragma once

#include <cstdint>
#include <string>

#include "tplscan/detection.hpp"
#include "tplscan/version.hpp"

namespace tplscan {

// Tool configuration. Loadable from a JSON key-value file; command-line
// flags override file values. Unknown keys are rejected.
struct Config {
    std::string db_path;
    std::string model_path;
    std::string corpus_path;

    RetrievalConfig retrieval;
    std::size_t min_string_length = 5;
    VersionDistanceWeights vd_weights;
    std::uint64_t seed = 1;
    std::string output_format = "json";  // json | text
    std::string channels = "both";       // basic | fr | both
    bool strict = false;
    double timeout_minutes = 30.0;       // per-binary build budget; 0 disables

    // Training knobs.
    int train_epochs = 40;
    int train_batch_size = 32;
    double train_learning_rate = 1e-3;
    int embed_dim = 64;
    int iterations = 5;
    int mining_rounds = 0;          // hard-negative mining passes after
                                    // base training; 0 disables mining
    double mining_threshold = 0.7;  // cosine above which cross-library
                                    // pairs are mined as negatives

    // Throws ConfigError on unknown keys or invalid values.
    static Config load(const std::string& path);
    void validate() const;
};

}  // namespace tplscan
