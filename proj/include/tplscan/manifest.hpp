#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "tplscan/features.hpp"

namespace tplscan {

// JSON manifest format, one document per binary:
//   {
//     "binary_id": "...",
//     "strings":   ["..."],
//     "exports":   ["..."],
//     "functions": [{"id": "...",
//                    "blocks": [[7 non-negative numbers], ...],
//                    "edges":  [[src, dst], ...]}],
//     "fcg_edges": [["caller_id", "callee_id"], ...],
//     "library":   "...",   // optional
//     "version":   "..."    // optional
//   }
// Block attribute order is fixed; see docs/manifest-schema.md.

BinaryFeatureSet feature_set_from_json(const nlohmann::json& doc);
nlohmann::json feature_set_to_json(const BinaryFeatureSet& fs);

// Throws ValidationError on schema violations (message names the field path)
// and IntegrityError on dangling FCG edges.
BinaryFeatureSet load_manifest(const std::string& path);
void save_manifest(const BinaryFeatureSet& fs, const std::string& path);

}  // namespace tplscan
