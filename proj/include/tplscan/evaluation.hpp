#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tplscan/database.hpp"
#include "tplscan/embedding.hpp"
#include "tplscan/features.hpp"
#include "tplscan/pipeline.hpp"
#include "tplscan/version.hpp"

namespace tplscan {

// Per-target set of (library, true version).
struct GroundTruth {
    std::map<std::string, std::map<std::string, std::string>> targets;
};

struct CorpusSpec {
    std::uint64_t seed = 1;
    int library_count = 50;
    int versions_per_library = 3;
    int functions_per_unit = 12;
    int strings_per_unit = 30;
    int exports_per_unit = 8;
    int target_count = 30;
    int fuse_fan_in = 3;             // libraries per fused target
    double strip_proportion = 0.3;   // basic features removed from targets
    double attr_jitter = 0.05;       // relative attribute noise on variants
    int edge_edits = 2;              // CFG edge insertions/deletions per variant
    double common_string_fraction = 0.2;  // strings drawn from a shared pool
    int junk_functions_per_target = 6;
};

struct SyntheticCorpus {
    std::vector<BinaryFeatureSet> units;    // database side, with provenance
    std::vector<BinaryFeatureSet> targets;  // fused binaries, no provenance
    GroundTruth truth;
};

struct PrResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_defined = true;  // false when nothing was reported
    bool vacuous = false;           // both sides empty
};

// Library-level precision / recall / F1 over id sets.
PrResult prf1(const std::set<std::string>& reported,
              const std::set<std::string>& truth);

struct VersionMetrics {
    double vp = 0.0;       // exact-version rate over true positives
    double mean_vd = 0.0;  // mean weighted version distance
    std::size_t true_positives = 0;
};

// reported: library -> identified version, restricted per target elsewhere.
VersionMetrics version_metrics(
    const std::map<std::string, std::string>& reported_versions,
    const std::map<std::string, std::string>& true_versions,
    const VersionDistanceWeights& weights = {});

struct RetrievalQuery {
    Eigen::VectorXd vector;
    std::string true_function_id;
    std::string true_unit_id;
};

// Fraction of queries whose true counterpart appears in topk(query, K).
std::map<int, double> recall_at_k(const std::vector<RetrievalQuery>& queries,
                                  const VectorStore& store,
                                  const std::vector<int>& ks);

// Random-graph building blocks of the generator, exposed for the training
// pipeline and the tests.
Acfg random_acfg(std::mt19937_64& rng, const std::string& function_id);
Acfg perturb_acfg(std::mt19937_64& rng, const Acfg& base,
                  const std::string& new_id, double attr_jitter,
                  int edge_edits);

// Deterministic under spec.seed: distinctive per-library strings/exports,
// random ACFGs and FCGs, versions as mutations of a base, fused targets
// with stripped basic features and perturbed function variants.
SyntheticCorpus generate_corpus(const CorpusSpec& spec);

// Positive pairs are (function, recompilation-style perturbation of it);
// negatives pair functions from different sources.
std::vector<TrainingPair> generate_training_pairs(const CorpusSpec& spec,
                                                  int pair_count,
                                                  std::uint64_t seed);

enum class Variant {
    kBasicOnly,      // channel A, no filter
    kBasicFcg,       // channel A + FCG filter
    kFrOnly,         // channel B, no filter
    kFrFcg,          // channel B + FCG filter
    kFull,           // both channels + FCG filter
    kFullMinusFcg,   // both channels, no filter
};

std::string variant_name(Variant v);
std::optional<Variant> variant_from_name(const std::string& name);

struct VariantMetrics {
    Variant variant = Variant::kFull;
    PrResult pr;
    VersionMetrics versions;
};

struct AblationResult {
    std::vector<VariantMetrics> rows;
};

// Same targets, same database, one detection run per variant.
AblationResult run_ablation(const SyntheticCorpus& corpus, const TplDatabase& db,
                            const EmbeddingModel* model,
                            const std::vector<Variant>& variants,
                            const RetrievalConfig& cfg = {});

std::string ablation_to_csv(const AblationResult& result);

// Corpus I/O: manifests for units/targets plus ground_truth.json.
void write_corpus(const SyntheticCorpus& corpus, const std::string& dir);
SyntheticCorpus read_corpus(const std::string& dir);

}  // namespace tplscan
