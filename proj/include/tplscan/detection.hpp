#pragma once

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "tplscan/database.hpp"
#include "tplscan/embedding.hpp"
#include "tplscan/features.hpp"

namespace tplscan {

enum class Channel { kBasic, kFunctionRetrieval };

struct MatchedPair {
    std::string target_function;
    std::string unit_function;
    double cosine = 0.0;

    auto operator<=>(const MatchedPair&) const = default;
};

struct Candidate {
    UnitRef unit;
    Channel channel = Channel::kBasic;
    // Channel-A evidence: common basic features with weights.
    std::set<StringLiteral> matched_strings;
    std::set<ExportedName> matched_exports;
    // Channel-B evidence: retrieved similar-function pairs.
    std::set<MatchedPair> matched_pairs;
    // Common-edge count, filled by the FCG filter.
    int score = 0;
};

struct MiniFcg {
    std::set<std::string> anchors;
    std::set<std::pair<std::string, std::string>> edges;
};

struct RetrievalConfig {
    int neighbors_per_function = 100;  // K
    int unit_cap = 200;                // candidate units kept from channel B
    int channel_a_edge_threshold = 3;  // minimum common edges, channel A
    int channel_b_edge_threshold = 1;  // minimum common edges, channel B
    double pairing_cosine_threshold = 0.8;
    // Channel-A acceptance rules (B2SFinder constants).
    double string_proportion_threshold = 0.5;
    double weight_sum_threshold = 100.0;
    double weight_proportion_threshold = 0.1;
    int export_count_threshold = 20;
};

// Channel A: units sharing basic features with the target. A unit is a
// candidate iff any rule holds (strict inequalities):
//   (1) common strings / unit strings     > 0.5
//   (2) common weight sum > 100 AND common weight / unit weight > 0.1
//   (3) common exported names             > 20
std::vector<Candidate> match_basic(const BinaryFeatureSet& target,
                                   const TplDatabase& db,
                                   const RetrievalConfig& cfg = {});

// Channel B: union of top-K hits over all target vectors, grouped by unit,
// sorted by descending hit count (ties: ascending unit id), truncated to the
// unit cap. Each candidate carries its retrieval pairs.
std::vector<Candidate> retrieve_candidates(
    const std::vector<FunctionVector>& target_vectors, const TplDatabase& db,
    const RetrievalConfig& cfg = {});

// For each target function, its most similar unit function; the pair is
// emitted iff the cosine exceeds the threshold. Many target functions may
// map to one unit function.
std::set<MatchedPair> pair_functions(
    const std::vector<FunctionVector>& target_vectors,
    const std::vector<const FunctionVector*>& unit_vectors,
    double cosine_threshold = 0.8);

// Contracts an FCG onto its anchor nodes: edge (a, b) exists iff a != b,
// both are anchors, and b is reachable from a along a path whose interior
// nodes are all non-anchors.
MiniFcg build_mini_fcg(const Fcg& fcg, const std::set<std::string>& anchors);

// Number of target mini-FCG edges (f1, f2) such that some pairs
// (f1, f1'), (f2, f2') exist and (f1', f2') is an edge of the unit
// mini-FCG. Each target edge counts at most once.
int common_edges(const MiniFcg& mini_target, const MiniFcg& mini_unit,
                 const std::set<MatchedPair>& pairs);

// Runs the FCG comparison for every candidate, keeps the ones at or above
// their channel's common-edge threshold, and merges by unit keeping the
// maximum score. Channel-B pairs below the cosine threshold are discarded
// before anchoring. Throws IntegrityError when a candidate's unit payload
// is missing from the database.
std::vector<Candidate> fcg_filter(const std::vector<Candidate>& candidates,
                                  const BinaryFeatureSet& target,
                                  const std::vector<FunctionVector>& target_vectors,
                                  const TplDatabase& db,
                                  const RetrievalConfig& cfg = {});

// Merge without filtering (the "-fcg" ablation path): dedup by unit,
// keeping channel-A evidence when both channels report a unit.
std::vector<Candidate> merge_unfiltered(const std::vector<Candidate>& candidates);

}  // namespace tplscan
