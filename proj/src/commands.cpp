#include "tplscan/commands.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "tplscan/elf.hpp"
#include "tplscan/errors.hpp"
#include "tplscan/manifest.hpp"
#include "tplscan/pipeline.hpp"

namespace tplscan {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct TimeoutExceeded {};

struct Deadline {
    Clock::time_point end;
    bool enabled;

    explicit Deadline(double minutes)
        : end(Clock::now() +
              std::chrono::duration_cast<Clock::duration>(
                  std::chrono::duration<double>(minutes * 60.0))),
          enabled(minutes > 0.0) {}

    void check() const {
        if (enabled && Clock::now() > end) {
            throw TimeoutExceeded{};
        }
    }
};

bool is_manifest(const fs::path& path) {
    return path.extension() == ".json";
}

BinaryFeatureSet load_binary(const fs::path& path, std::size_t min_string_length,
                             std::string library = {}, std::string version = {}) {
    if (is_manifest(path)) {
        return load_manifest(path.string());
    }
    BinaryFeatureSet fs_out;
    fs_out.binary_id = path.filename().string();
    ElfBasics basics = extract_elf_basics_file(path.string(), min_string_length);
    fs_out.strings = std::move(basics.strings);
    fs_out.exports = std::move(basics.exports);
    fs_out.library = std::move(library);
    fs_out.version = std::move(version);
    return fs_out;
}

std::vector<FunctionVector> embed_with_deadline(const BinaryFeatureSet& unit,
                                                const EmbeddingModel* model,
                                                const Deadline& deadline) {
    std::vector<FunctionVector> out;
    if (!model) {
        return out;
    }
    for (const Acfg* acfg : embeddable_functions(unit)) {
        deadline.check();
        out.push_back(
            {acfg->function_id, unit.binary_id, embed_acfg(*acfg, *model)});
    }
    return out;
}

std::optional<EmbeddingModel> maybe_load_model(const Config& cfg) {
    if (cfg.model_path.empty() || !fs::exists(cfg.model_path)) {
        return std::nullopt;
    }
    return EmbeddingModel::load(cfg.model_path);
}

}  // namespace

int cmd_db_build(const std::string& input_dir, const std::string& db_path,
                 const Config& cfg, std::ostream& log) {
    if (!fs::is_directory(input_dir)) {
        log << "error: input directory " << input_dir << " does not exist\n";
        return kExitError;
    }
    std::optional<EmbeddingModel> model = maybe_load_model(cfg);

    // Manifests anywhere in the tree; ELF files are expected at
    // <library>/<version>/<file> so provenance can be read off the path.
    std::vector<fs::path> inputs;
    for (const auto& entry : fs::recursive_directory_iterator(input_dir)) {
        if (entry.is_regular_file()) {
            inputs.push_back(entry.path());
        }
    }
    std::sort(inputs.begin(), inputs.end());

    TplDatabase db;
    int warnings = 0;
    std::size_t feature_count = 0;
    for (const auto& path : inputs) {
        Deadline deadline(cfg.timeout_minutes);
        try {
            BinaryFeatureSet unit;
            if (is_manifest(path)) {
                unit = load_manifest(path.string());
            } else {
                const fs::path rel = fs::relative(path, input_dir);
                std::string library;
                std::string version;
                if (std::distance(rel.begin(), rel.end()) >= 3) {
                    auto it = rel.begin();
                    library = it->string();
                    version = (++it)->string();
                }
                unit = load_binary(path, cfg.min_string_length,
                                   std::move(library), std::move(version));
            }
            deadline.check();
            auto vectors =
                embed_with_deadline(unit, model ? &*model : nullptr, deadline);
            feature_count += unit.strings.size() + unit.exports.size();
            db.index_unit(unit, std::move(vectors));
        } catch (const TimeoutExceeded&) {
            log << "warning: timeout on " << path.string() << ", skipped\n";
            ++warnings;
        } catch (const std::exception& e) {
            if (cfg.strict) {
                log << "error: " << path.string() << ": " << e.what() << "\n";
                return kExitError;
            }
            log << "warning: " << path.string() << ": " << e.what()
                << ", skipped\n";
            ++warnings;
        }
    }

    if (inputs.empty()) {
        log << "warning: no input binaries in " << input_dir << "\n";
    }
    db.persist(db_path);
    log << "indexed " << db.unit_count() << " units, " << feature_count
        << " basic features, " << db.store().size() << " vectors -> "
        << db_path << "\n";
    return warnings > 0 ? kExitPartial : kExitOk;
}

int cmd_extract(const std::string& input_path, const std::string& output_path,
                const Config& cfg, std::ostream& log) {
    BinaryFeatureSet fs_out = load_binary(input_path, cfg.min_string_length);
    save_manifest(fs_out, output_path);
    log << "extracted " << fs_out.strings.size() << " strings, "
        << fs_out.exports.size() << " exports, " << fs_out.acfgs.size()
        << " functions -> " << output_path << "\n";
    return kExitOk;
}

std::vector<TrainingPair> training_pairs_from_corpus(
    const SyntheticCorpus& corpus, int per_function, double attr_jitter,
    int edge_edits, std::uint64_t seed) {
    std::mt19937_64 rng(seed);

    // Pool every embeddable function of every unit: later versions rewrite a
    // share of their functions, and the model should discriminate all of the
    // functions it will index, not just the first release's.
    std::vector<const Acfg*> pool;
    std::vector<std::size_t> pool_library;
    std::map<std::string, std::size_t> library_ids;
    for (const auto& unit : corpus.units) {
        const std::size_t library_index =
            library_ids.emplace(unit.library, library_ids.size()).first->second;
        for (const Acfg* acfg : embeddable_functions(unit)) {
            pool.push_back(acfg);
            pool_library.push_back(library_index);
        }
    }
    if (pool.size() < 2 || library_ids.size() < 2) {
        throw ConfigError("corpus has too few functions for training");
    }

    // Mean log-compressed attribute vector, used to mine hard negatives.
    auto signature = [](const Acfg& f) {
        std::array<double, kBlockAttrCount> m{};
        for (const auto& block : f.blocks) {
            for (int a = 0; a < kBlockAttrCount; ++a) {
                m[a] += std::log1p(block[a]);
            }
        }
        for (double& v : m) v /= static_cast<double>(f.block_count());
        return m;
    };
    std::vector<std::array<double, kBlockAttrCount>> signatures;
    signatures.reserve(pool.size());
    for (const Acfg* acfg : pool) signatures.push_back(signature(*acfg));
    auto signature_cosine = [](const std::array<double, kBlockAttrCount>& a,
                               const std::array<double, kBlockAttrCount>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int i = 0; i < kBlockAttrCount; ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        const double denom = std::sqrt(na * nb);
        return denom > 0.0 ? dot / denom : 0.0;
    };

    std::vector<TrainingPair> pairs;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (int rep = 0; rep < per_function; ++rep) {
            pairs.push_back({*pool[i],
                             perturb_acfg(rng, *pool[i],
                                          pool[i]->function_id + "_v" +
                                              std::to_string(rep),
                                          attr_jitter, edge_edits),
                             +1});
            // Half the negatives are uniform draws from other libraries,
            // half are mined: the most profile-similar of several draws.
            // Hard negatives train the boundary where retrieval false
            // positives live; uniform ones keep the easy mass spread.
            const int candidates = (rep % 2 == 0) ? 8 : 1;
            std::size_t best = pool.size();
            double best_sim = -2.0;
            for (int c = 0; c < candidates; ++c) {
                std::size_t j = pick(rng);
                while (pool_library[j] == pool_library[i]) {
                    j = pick(rng);
                }
                const double sim =
                    signature_cosine(signatures[i], signatures[j]);
                if (sim > best_sim) {
                    best_sim = sim;
                    best = j;
                }
            }
            pairs.push_back({*pool[i], *pool[best], -1});
        }
    }
    return pairs;
}

EmbeddingModel train_for_corpus(const SyntheticCorpus& corpus,
                                const TrainConfig& cfg, int per_function,
                                double attr_jitter, int edge_edits,
                                int mining_rounds, double mining_threshold,
                                std::ostream& log) {
    std::vector<const Acfg*> pool;
    std::vector<std::size_t> pool_library;
    std::map<std::string, std::size_t> library_ids;
    for (const auto& unit : corpus.units) {
        const std::size_t library_index =
            library_ids.emplace(unit.library, library_ids.size()).first->second;
        for (const Acfg* acfg : embeddable_functions(unit)) {
            pool.push_back(acfg);
            pool_library.push_back(library_index);
        }
    }

    std::vector<TrainingPair> dataset = training_pairs_from_corpus(
        corpus, per_function, attr_jitter, edge_edits, cfg.seed);
    TrainResult result = train(dataset, cfg);
    log << "round 0: " << dataset.size() << " pairs, best validation loss "
        << *std::min_element(result.validation_losses.begin(),
                             result.validation_losses.end())
        << "\n";

    // Cross-library pairs whose cosine still exceeds the mining threshold
    // under the given model, hardest first.
    auto collisions = [&](const EmbeddingModel& model) {
        std::vector<Eigen::VectorXd> vectors;
        vectors.reserve(pool.size());
        for (const Acfg* acfg : pool) {
            vectors.push_back(embed_acfg(*acfg, model));
        }
        std::vector<std::tuple<double, std::size_t, std::size_t>> mined;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            for (std::size_t j = i + 1; j < pool.size(); ++j) {
                if (pool_library[i] == pool_library[j]) continue;
                const double c = vectors[i].dot(vectors[j]);
                if (c > mining_threshold) {
                    mined.push_back({c, i, j});
                }
            }
        }
        std::sort(mined.rbegin(), mined.rend());
        return mined;
    };

    EmbeddingModel best_model = result.model;
    auto mined = collisions(result.model);
    std::size_t best_collisions = mined.size();

    // Mined pairs accumulate in a replay buffer across rounds; retraining
    // on only the current round's collisions makes the model oscillate
    // (separating this round's pairs re-collides last round's).
    std::map<std::pair<std::size_t, std::size_t>, double> buffer;
    std::mt19937_64 rng(cfg.seed + 1);
    for (int round = 1; round <= mining_rounds; ++round) {
        if (mined.empty()) {
            log << "round " << round << ": no collisions above "
                << mining_threshold << ", stopping early\n";
            break;
        }
        constexpr std::size_t kRoundCap = 20000;
        constexpr std::size_t kBufferCap = 30000;
        for (std::size_t k = 0; k < std::min(mined.size(), kRoundCap); ++k) {
            const auto& [c, i, j] = mined[k];
            auto [it, inserted] = buffer.try_emplace({i, j}, c);
            if (!inserted) it->second = std::max(it->second, c);
        }
        if (buffer.size() > kBufferCap) {
            // Keep the hardest pairs under the current model.
            std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>>
                ranked;
            ranked.reserve(buffer.size());
            for (const auto& [key, c] : buffer) ranked.push_back({c, key});
            std::sort(ranked.rbegin(), ranked.rend());
            ranked.resize(kBufferCap);
            buffer.clear();
            for (const auto& [c, key] : ranked) buffer.emplace(key, c);
        }

        std::vector<TrainingPair> augmented = dataset;
        for (const auto& [key, c] : buffer) {
            const auto [i, j] = key;
            augmented.push_back({*pool[i], *pool[j], -1});
            // A fresh positive per buffered pair keeps the labels balanced
            // and the perturbation invariance intact while the collision is
            // pushed apart.
            augmented.push_back(
                {*pool[i],
                 perturb_acfg(rng, *pool[i],
                              pool[i]->function_id + "_m" +
                                  std::to_string(round),
                              attr_jitter, edge_edits),
                 +1});
        }
        // Warm-start from the previous round's checkpoint so the mining
        // rounds accumulate instead of relearning from scratch; a short
        // schedule per round is enough to push the buffered collisions
        // apart.
        TrainConfig round_cfg = cfg;
        round_cfg.epochs = std::max(5, cfg.epochs / 4);
        round_cfg.seed = cfg.seed + static_cast<std::uint64_t>(round);
        result = train(augmented, round_cfg, &result.model);

        mined = collisions(result.model);
        log << "round " << round << ": buffer " << buffer.size()
            << " pairs, dataset " << augmented.size()
            << ", best validation loss "
            << *std::min_element(result.validation_losses.begin(),
                                 result.validation_losses.end())
            << ", " << mined.size() << " collisions remain\n";
        // The returned checkpoint is the round with the fewest surviving
        // collisions — the quantity retrieval precision actually depends
        // on — not the last round.
        if (mined.size() < best_collisions) {
            best_collisions = mined.size();
            best_model = result.model;
        }
    }
    return best_model;
}

int cmd_train(const Config& cfg, std::ostream& log) {
    if (cfg.corpus_path.empty() || cfg.model_path.empty()) {
        throw ConfigError("train needs corpus_path and model_path");
    }
    SyntheticCorpus corpus = read_corpus(cfg.corpus_path);
    CorpusSpec defaults;

    TrainConfig tc;
    tc.epochs = cfg.train_epochs;
    tc.batch_size = cfg.train_batch_size;
    tc.learning_rate = cfg.train_learning_rate;
    tc.seed = cfg.seed;
    tc.embed_dim = cfg.embed_dim;
    tc.iterations = cfg.iterations;
    EmbeddingModel model = train_for_corpus(
        corpus, tc, 2, defaults.attr_jitter, defaults.edge_edits,
        cfg.mining_rounds, cfg.mining_threshold, log);
    model.save(cfg.model_path);
    log << "model -> " << cfg.model_path << "\n";
    return kExitOk;
}

int cmd_scan(const std::string& target_path, const Config& cfg,
             const std::string& output_path, std::ostream& out,
             std::ostream& log) {
    if (cfg.db_path.empty()) {
        throw ConfigError("scan needs db_path");
    }
    TplDatabase db = TplDatabase::load(cfg.db_path);
    std::optional<EmbeddingModel> model = maybe_load_model(cfg);

    ScanOptions opts;
    opts.retrieval = cfg.retrieval;
    opts.channel_basic = cfg.channels != "fr";
    opts.channel_function_retrieval = cfg.channels != "basic";
    if (opts.channel_function_retrieval && !model) {
        throw ConfigError("channels '" + cfg.channels +
                          "' need a model (set model_path)");
    }
    if (!model) {
        // Basic-only scan without embeddings cannot run the FCG filter.
        opts.apply_fcg_filter = false;
        log << "warning: no model loaded, FCG filter disabled\n";
    }

    const BinaryFeatureSet target =
        load_binary(target_path, cfg.min_string_length);
    const DetectionReport report =
        scan(target, db, model ? &*model : nullptr, opts);

    std::string rendered;
    if (cfg.output_format == "text") {
        rendered = report_to_text(report);
    } else {
        rendered = report_to_json(report).dump(2) + "\n";
    }
    if (output_path.empty()) {
        out << rendered;
    } else {
        std::ofstream file(output_path, std::ios::binary);
        if (!file) {
            throw ConfigError("cannot write report " + output_path);
        }
        file << rendered;
    }
    return kExitOk;
}

int cmd_eval(const Config& cfg, const std::vector<std::string>& variant_names,
             const std::string& output_prefix, std::ostream& log) {
    if (cfg.corpus_path.empty()) {
        throw ConfigError("eval needs corpus_path");
    }
    std::vector<Variant> variants;
    if (variant_names.empty()) {
        variants = {Variant::kBasicOnly, Variant::kBasicFcg, Variant::kFrOnly,
                    Variant::kFrFcg,     Variant::kFull,     Variant::kFullMinusFcg};
    } else {
        for (const auto& name : variant_names) {
            auto v = variant_from_name(name);
            if (!v) {
                throw ConfigError("unknown variant '" + name + "'");
            }
            variants.push_back(*v);
        }
    }

    SyntheticCorpus corpus = read_corpus(cfg.corpus_path);
    std::optional<EmbeddingModel> model = maybe_load_model(cfg);
    const bool needs_model =
        std::any_of(variants.begin(), variants.end(),
                    [](Variant v) { return v != Variant::kBasicOnly; });
    if (needs_model && !model) {
        throw ConfigError("eval variants need a model (run train first)");
    }

    TplDatabase db = build_database(corpus.units, model ? &*model : nullptr);
    AblationResult result = run_ablation(corpus, db, model ? &*model : nullptr,
                                         variants, cfg.retrieval);

    const std::string csv = ablation_to_csv(result);
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& row : result.rows) {
        doc.push_back({{"variant", variant_name(row.variant)},
                       {"precision", row.pr.precision},
                       {"recall", row.pr.recall},
                       {"f1", row.pr.f1},
                       {"vp", row.versions.vp},
                       {"mean_vd", row.versions.mean_vd},
                       {"true_positives", row.versions.true_positives}});
    }
    std::ofstream csv_out(output_prefix + ".csv", std::ios::binary);
    csv_out << csv;
    std::ofstream json_out(output_prefix + ".json", std::ios::binary);
    json_out << doc.dump(2) << "\n";
    log << csv;
    return kExitOk;
}

int cmd_corpus_gen(const CorpusSpec& spec, const std::string& output_dir,
                   std::ostream& log) {
    SyntheticCorpus corpus = generate_corpus(spec);
    write_corpus(corpus, output_dir);
    log << "generated " << corpus.units.size() << " units, "
        << corpus.targets.size() << " targets -> " << output_dir << "\n";
    return kExitOk;
}

}  // namespace tplscan
