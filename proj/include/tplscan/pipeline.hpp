#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tplscan/database.hpp"
#include "tplscan/detection.hpp"
#include "tplscan/embedding.hpp"
#include "tplscan/report.hpp"

namespace tplscan {

struct ScanOptions {
    bool channel_basic = true;
    bool channel_function_retrieval = true;
    bool apply_fcg_filter = true;
    RetrievalConfig retrieval;
};

// Indexes every unit, embedding its eligible functions when a model is
// given.
TplDatabase build_database(const std::vector<BinaryFeatureSet>& units,
                           const EmbeddingModel* model);

// Embeds the target's eligible functions with the model. Returns an empty
// list when no model is given.
std::vector<FunctionVector> embed_target(const BinaryFeatureSet& target,
                                         const EmbeddingModel* model);

// Runs the enabled channels and (optionally) the FCG filter; returns the
// final deduplicated candidates. Throws ConfigError when a step that needs
// embeddings is enabled without a model.
std::vector<Candidate> scan_candidates(const BinaryFeatureSet& target,
                                       const TplDatabase& db,
                                       const EmbeddingModel* model,
                                       const ScanOptions& opts);

DetectionReport scan(const BinaryFeatureSet& target, const TplDatabase& db,
                     const EmbeddingModel* model, const ScanOptions& opts);

}  // namespace tplscan
