#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tplscan/config.hpp"
#include "tplscan/evaluation.hpp"

namespace tplscan {

// Exit codes shared by every command: 0 success, 1 error, 2 partial with
// warnings.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

// Builds a TPL database from a directory of manifests (*.json) and/or ELF
// binaries laid out as <library>/<version>/<file>. Embeds functions when a
// model is configured. Each binary gets cfg.timeout_minutes of wall clock;
// binaries over budget are logged and skipped.
int cmd_db_build(const std::string& input_dir, const std::string& db_path,
                 const Config& cfg, std::ostream& log);

// Extracts features from one binary (ELF or manifest) to a manifest file.
int cmd_extract(const std::string& input_path, const std::string& output_path,
                const Config& cfg, std::ostream& log);

// Trains the embedding model on perturbation pairs derived from the corpus
// and writes the checkpoint to cfg.model_path.
int cmd_train(const Config& cfg, std::ostream& log);

// Scans one target against the database; writes the report (JSON or text)
// to output_path, or to `out` when output_path is empty.
int cmd_scan(const std::string& target_path, const Config& cfg,
             const std::string& output_path, std::ostream& out,
             std::ostream& log);

// Runs the ablation variants over the corpus and writes metrics CSV + JSON
// next to output_prefix.
int cmd_eval(const Config& cfg, const std::vector<std::string>& variant_names,
             const std::string& output_prefix, std::ostream& log);

// Generates a synthetic corpus with ground truth.
int cmd_corpus_gen(const CorpusSpec& spec, const std::string& output_dir,
                   std::ostream& log);

// Perturbation training pairs derived from a corpus: per_function positives
// (function vs fresh perturbation) and as many negatives per function.
std::vector<TrainingPair> training_pairs_from_corpus(
    const SyntheticCorpus& corpus, int per_function, double attr_jitter,
    int edge_edits, std::uint64_t seed);

// Trains a detection model for a corpus with iterative hard-negative
// mining: after each round the corpus functions are embedded and
// cross-library pairs whose cosine still exceeds mining_threshold are added
// to the dataset as negatives, then the model is retrained. This
// directly suppresses retrieval collisions between the functions the
// database will actually index.
EmbeddingModel train_for_corpus(const SyntheticCorpus& corpus,
                                const TrainConfig& cfg, int per_function,
                                double attr_jitter, int edge_edits,
                                int mining_rounds, double mining_threshold,
                                std::ostream& log);

}  // namespace tplscan
