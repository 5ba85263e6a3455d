#include "tplscan/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"
#include "tplscan/manifest.hpp"

namespace tplscan {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

PrResult prf1(const std::set<std::string>& reported,
              const std::set<std::string>& truth) {
    PrResult r;
    if (reported.empty() && truth.empty()) {
        r.vacuous = true;
        r.precision_defined = false;
        return r;
    }
    std::size_t correct = 0;
    for (const auto& lib : reported) {
        correct += truth.count(lib);
    }
    if (reported.empty()) {
        r.precision_defined = false;
        r.precision = 0.0;
    } else {
        r.precision = static_cast<double>(correct) / reported.size();
    }
    r.recall = truth.empty()
                   ? 0.0
                   : static_cast<double>(correct) / truth.size();
    r.f1 = (r.precision + r.recall) > 0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

VersionMetrics version_metrics(
    const std::map<std::string, std::string>& reported_versions,
    const std::map<std::string, std::string>& true_versions,
    const VersionDistanceWeights& weights) {
    VersionMetrics m;
    double vd_sum = 0.0;
    std::size_t exact = 0;
    for (const auto& [library, true_version] : true_versions) {
        auto it = reported_versions.find(library);
        if (it == reported_versions.end()) {
            continue;  // not a true positive
        }
        ++m.true_positives;
        const Version reported = Version::parse(it->second);
        const Version truth = Version::parse(true_version);
        if (reported == truth) {
            ++exact;
        }
        vd_sum += version_distance(reported, truth, weights);
    }
    if (m.true_positives > 0) {
        m.vp = static_cast<double>(exact) / m.true_positives;
        m.mean_vd = vd_sum / m.true_positives;
    }
    return m;
}

std::map<int, double> recall_at_k(const std::vector<RetrievalQuery>& queries,
                                  const VectorStore& store,
                                  const std::vector<int>& ks) {
    std::map<int, double> out;
    for (int k : ks) {
        std::size_t recalled = 0;
        for (const auto& q : queries) {
            for (const auto& hit : store.topk(q.vector, k)) {
                if (hit.function_id == q.true_function_id &&
                    hit.unit_id == q.true_unit_id) {
                    ++recalled;
                    break;
                }
            }
        }
        out[k] = queries.empty()
                     ? 0.0
                     : static_cast<double>(recalled) / queries.size();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

namespace {

using Rng = std::mt19937_64;

int rand_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double rand_real(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::string rand_hex(Rng& rng, int digits) {
    static const char* kHex = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < digits; ++i) {
        s += kHex[rand_int(rng, 0, 15)];
    }
    return s;
}

void refresh_offspring(Acfg& acfg) {
    const std::vector<int> offspring =
        compute_offspring(acfg.edges, acfg.block_count());
    for (int b = 0; b < acfg.block_count(); ++b) {
        acfg.blocks[b][6] = offspring[b];
    }
}

}  // namespace

Acfg random_acfg(Rng& rng, const std::string& function_id) {
    Acfg acfg;
    acfg.function_id = function_id;
    // Log-uniform block count in [5, 60]: function sizes are heavy-tailed in
    // real code, and the size spread keeps unrelated functions structurally
    // distinguishable.
    std::uniform_real_distribution<double> log_size(std::log(5.0),
                                                    std::log(60.0));
    const int n = std::min(60, static_cast<int>(std::exp(log_size(rng))));
    // Per-function attribute profile: every block of one function shares the
    // same log-normal per-attribute multipliers, mimicking how real functions
    // have a characteristic instruction mix. Variants of a function inherit
    // the profile (they perturb these blocks), unrelated functions draw
    // independent profiles, which keeps their embeddings apart.
    std::normal_distribution<double> log_profile(0.0, 1.2);
    std::array<double, 6> profile;
    for (double& m : profile) m = std::exp(log_profile(rng));
    // Each function also draws a handful of block templates (think: its
    // characteristic prologue / loop body / dispatch / cleanup shapes) and
    // every block instantiates one of them with small count noise. The
    // template set is a high-dimensional function fingerprint that variants
    // inherit, so unrelated functions rarely embed close together.
    constexpr int kTemplates = 4;
    std::array<std::array<double, 6>, kTemplates> templates;
    for (auto& tmpl : templates) {
        tmpl[0] = rand_int(rng, 0, 3);    // string constants
        tmpl[1] = rand_int(rng, 0, 8);    // numeric constants
        tmpl[2] = rand_int(rng, 1, 6);    // transfer instructions
        tmpl[3] = rand_int(rng, 0, 4);    // calls
        tmpl[4] = rand_int(rng, 5, 60);   // total instructions
        tmpl[5] = rand_int(rng, 0, 20);   // arithmetic instructions
        for (int a = 0; a < 6; ++a) {
            tmpl[a] = std::round(tmpl[a] * profile[a]);
        }
    }
    for (int b = 0; b < n; ++b) {
        const auto& tmpl = templates[rand_int(rng, 0, kTemplates - 1)];
        BasicBlockAttrs attrs;
        for (int a = 0; a < 6; ++a) {
            attrs[a] = std::max(0.0, tmpl[a] + rand_int(rng, -1, 1));
        }
        acfg.blocks.push_back(attrs);
    }
    std::set<std::pair<int, int>> edges;
    for (int b = 1; b < n; ++b) {
        edges.insert({rand_int(rng, 0, b - 1), b});  // keeps blocks reachable
    }
    // Per-function edge density, another axis that separates unrelated
    // functions: sparse trees up to dense graphs with ~2 extra edges/block.
    const int extra = rand_int(rng, 0, 2 * n);
    for (int i = 0; i < extra; ++i) {
        int src = rand_int(rng, 0, n - 1);
        int dst = rand_int(rng, 0, n - 1);
        if (src != dst) {
            edges.insert({src, dst});
        }
    }
    acfg.edges.assign(edges.begin(), edges.end());
    refresh_offspring(acfg);
    return acfg;
}

// Recompilation-style variant: relative attribute jitter plus a few edge
// insertions/deletions.
Acfg perturb_acfg(Rng& rng, const Acfg& base, const std::string& new_id,
                  double attr_jitter, int edge_edits) {
    Acfg out = base;
    out.function_id = new_id;
    std::normal_distribution<double> noise(0.0, attr_jitter);
    for (auto& block : out.blocks) {
        for (int a = 0; a < 6; ++a) {
            const double scaled = block[a] * (1.0 + noise(rng));
            block[a] = std::max(0.0, std::round(scaled));
        }
    }
    std::set<std::pair<int, int>> edges(out.edges.begin(), out.edges.end());
    const int n = out.block_count();
    for (int i = 0; i < edge_edits; ++i) {
        if (rand_int(rng, 0, 1) == 0 && edges.size() > 1) {
            auto it = edges.begin();
            std::advance(it, rand_int(rng, 0, static_cast<int>(edges.size()) - 1));
            edges.erase(it);
        } else {
            int src = rand_int(rng, 0, n - 1);
            int dst = rand_int(rng, 0, n - 1);
            if (src != dst) {
                edges.insert({src, dst});
            }
        }
    }
    out.edges.assign(edges.begin(), edges.end());
    refresh_offspring(out);
    return out;
}

namespace {

struct LibrarySpec {
    std::string id;
    // version -> unit feature set
    std::vector<BinaryFeatureSet> versions;
};

std::string version_text(int index) {
    return "1." + std::to_string(index) + ".0";
}

}  // namespace

SyntheticCorpus generate_corpus(const CorpusSpec& spec) {
    if (spec.library_count <= 0 || spec.versions_per_library <= 0 ||
        spec.functions_per_unit <= 0 || spec.target_count < 0 ||
        spec.fuse_fan_in <= 0 || spec.fuse_fan_in > spec.library_count ||
        spec.strip_proportion < 0.0 || spec.strip_proportion > 1.0) {
        throw ConfigError("invalid corpus spec");
    }
    Rng rng(spec.seed);
    SyntheticCorpus corpus;

    // Shared pool of look-alike log messages; these recur across libraries
    // and create the cross-library feature collisions the filter must
    // handle.
    std::vector<std::string> common_pool;
    for (int i = 0; i < 40; ++i) {
        common_pool.push_back("common: shared runtime message " +
                              std::to_string(i) + " " + rand_hex(rng, 8));
    }

    std::vector<LibrarySpec> libraries;
    for (int li = 0; li < spec.library_count; ++li) {
        char lib_id[16];
        std::snprintf(lib_id, sizeof(lib_id), "lib%03d", li);
        LibrarySpec lib;
        lib.id = lib_id;

        BinaryFeatureSet base;
        base.library = lib.id;
        const int common_count = static_cast<int>(
            std::round(spec.common_string_fraction * spec.strings_per_unit));
        for (int i = 0; i < common_count; ++i) {
            const std::string& s =
                common_pool[rand_int(rng, 0, static_cast<int>(common_pool.size()) - 1)];
            base.strings.insert({s, string_weight(s)});
        }
        for (int i = 0; static_cast<int>(base.strings.size()) <
                        spec.strings_per_unit;
             ++i) {
            std::string s = lib.id + ": diagnostic " + std::to_string(i) +
                            " " + rand_hex(rng, 10);
            base.strings.insert({s, string_weight(s)});
        }
        for (int i = 0; i < spec.exports_per_unit; ++i) {
            base.exports.insert({lib.id + "_fn_" + std::to_string(i)});
        }
        std::vector<std::string> function_ids;
        for (int i = 0; i < spec.functions_per_unit; ++i) {
            char fid[24];
            std::snprintf(fid, sizeof(fid), "%s_f%02d", lib.id.c_str(), i);
            function_ids.push_back(fid);
            base.acfgs.emplace(fid, random_acfg(rng, fid));
            base.fcg.nodes.insert(fid);
        }
        for (int i = 1; i < spec.functions_per_unit; ++i) {
            base.fcg.edges.insert(
                {function_ids[rand_int(rng, 0, i - 1)], function_ids[i]});
        }
        for (int i = 0; i < spec.functions_per_unit / 2; ++i) {
            int a = rand_int(rng, 0, spec.functions_per_unit - 1);
            int b = rand_int(rng, 0, spec.functions_per_unit - 1);
            if (a != b) {
                base.fcg.edges.insert({function_ids[a], function_ids[b]});
            }
        }

        BinaryFeatureSet current = base;
        for (int vi = 0; vi < spec.versions_per_library; ++vi) {
            if (vi > 0) {
                // A release rewrites a slice of its functions and touches a
                // few strings.
                for (const auto& fid : function_ids) {
                    if (rand_real(rng, 0.0, 1.0) < 0.4) {
                        current.acfgs[fid] = random_acfg(rng, fid);
                    }
                }
                std::vector<StringLiteral> pool(current.strings.begin(),
                                                current.strings.end());
                std::shuffle(pool.begin(), pool.end(), rng);
                const int touched = std::min<int>(
                    spec.strings_per_unit / 10 + 1,
                    static_cast<int>(pool.size()));
                for (int i = 0; i < touched; ++i) {
                    current.strings.erase(pool[i]);
                    std::string s = lib.id + ": changed in " +
                                    version_text(vi) + " " + rand_hex(rng, 10);
                    current.strings.insert({s, string_weight(s)});
                }
            }
            BinaryFeatureSet unit = current;
            unit.version = version_text(vi);
            unit.binary_id = lib.id + "-" + unit.version;
            lib.versions.push_back(unit);
            corpus.units.push_back(std::move(unit));
        }
        libraries.push_back(std::move(lib));
    }

    for (int ti = 0; ti < spec.target_count; ++ti) {
        char target_id[16];
        std::snprintf(target_id, sizeof(target_id), "target%03d", ti);
        BinaryFeatureSet target;
        target.binary_id = target_id;

        std::vector<int> lib_indices(libraries.size());
        std::iota(lib_indices.begin(), lib_indices.end(), 0);
        std::shuffle(lib_indices.begin(), lib_indices.end(), rng);
        lib_indices.resize(spec.fuse_fan_in);
        std::sort(lib_indices.begin(), lib_indices.end());

        std::set<StringLiteral> library_strings;
        std::set<ExportedName> library_exports;
        for (int li : lib_indices) {
            const LibrarySpec& lib = libraries[li];
            const int vi = rand_int(rng, 0, spec.versions_per_library - 1);
            const BinaryFeatureSet& unit = lib.versions[vi];
            corpus.truth.targets[target_id][lib.id] = unit.version;

            library_strings.insert(unit.strings.begin(), unit.strings.end());
            library_exports.insert(unit.exports.begin(), unit.exports.end());
            for (const auto& [fid, acfg] : unit.acfgs) {
                const std::string tid = std::string(target_id) + "_" + fid;
                target.acfgs.emplace(
                    tid, perturb_acfg(rng, acfg, tid, spec.attr_jitter,
                                      spec.edge_edits));
                target.fcg.nodes.insert(tid);
            }
            for (const auto& [caller, callee] : unit.fcg.edges) {
                target.fcg.edges.insert(
                    {std::string(target_id) + "_" + caller,
                     std::string(target_id) + "_" + callee});
            }
        }

        // Strip a share of the library-derived basic features, emulating
        // macro-trimmed printouts and removed symbols.
        auto keep = [&](auto& source, auto& dest) {
            std::vector<typename std::decay_t<decltype(source)>::value_type>
                items(source.begin(), source.end());
            std::shuffle(items.begin(), items.end(), rng);
            const std::size_t strip = static_cast<std::size_t>(
                std::floor(spec.strip_proportion * items.size()));
            for (std::size_t i = strip; i < items.size(); ++i) {
                dest.insert(items[i]);
            }
        };
        keep(library_strings, target.strings);
        keep(library_exports, target.exports);

        // Project-specific noise on top of the fused libraries.
        for (int i = 0; i < spec.junk_functions_per_target; ++i) {
            const std::string fid =
                std::string(target_id) + "_junk_f" + std::to_string(i);
            target.acfgs.emplace(fid, random_acfg(rng, fid));
            target.fcg.nodes.insert(fid);
        }
        for (int i = 0; i < spec.junk_functions_per_target; ++i) {
            std::string s = std::string(target_id) + ": app message " +
                            std::to_string(i) + " " + rand_hex(rng, 10);
            target.strings.insert({s, string_weight(s)});
        }
        corpus.targets.push_back(std::move(target));
    }
    return corpus;
}

std::vector<TrainingPair> generate_training_pairs(const CorpusSpec& spec,
                                                  int pair_count,
                                                  std::uint64_t seed) {
    if (pair_count <= 1) {
        throw ConfigError("pair_count must be at least 2");
    }
    Rng rng(seed);
    // Mean log-compressed attribute profile; cheap stand-in for embedding
    // similarity when mining hard negatives.
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
    int counter = 0;
    while (static_cast<int>(pairs.size()) < pair_count) {
        const std::string id_a = "train_f" + std::to_string(counter++);
        Acfg a = random_acfg(rng, id_a);
        pairs.push_back({a,
                         perturb_acfg(rng, a, id_a + "_variant",
                                      spec.attr_jitter, spec.edge_edits),
                         +1});
        if (static_cast<int>(pairs.size()) < pair_count) {
            // Alternate uniform negatives (keep the easy mass spread out)
            // with semi-hard ones: of several random partners, keep the one
            // whose attribute profile is closest to a's. The hard half
            // trains the decision boundary where retrieval-tail false
            // positives live; uniform-only negatives leave it untrained.
            if (pairs.size() % 4 == 1) {
                pairs.push_back({std::move(a),
                                 random_acfg(rng, "train_f" +
                                                      std::to_string(counter++)),
                                 -1});
            } else {
                const auto sig_a = signature(a);
                Acfg best;
                double best_sim = -2.0;
                for (int c = 0; c < 8; ++c) {
                    Acfg candidate = random_acfg(
                        rng, "train_f" + std::to_string(counter++));
                    const double sim =
                        signature_cosine(sig_a, signature(candidate));
                    if (sim > best_sim) {
                        best_sim = sim;
                        best = std::move(candidate);
                    }
                }
                pairs.push_back({std::move(a), std::move(best), -1});
            }
        }
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::kBasicOnly: return "basic-only";
        case Variant::kBasicFcg: return "basic+fcg";
        case Variant::kFrOnly: return "fr-only";
        case Variant::kFrFcg: return "fr+fcg";
        case Variant::kFull: return "full";
        case Variant::kFullMinusFcg: return "full-minus-fcg";
    }
    return "unknown";
}

std::optional<Variant> variant_from_name(const std::string& name) {
    for (Variant v : {Variant::kBasicOnly, Variant::kBasicFcg, Variant::kFrOnly,
                      Variant::kFrFcg, Variant::kFull, Variant::kFullMinusFcg}) {
        if (variant_name(v) == name) {
            return v;
        }
    }
    return std::nullopt;
}

namespace {

ScanOptions options_for(Variant v, const RetrievalConfig& cfg) {
    ScanOptions opts;
    opts.retrieval = cfg;
    switch (v) {
        case Variant::kBasicOnly:
            opts.channel_function_retrieval = false;
            opts.apply_fcg_filter = false;
            break;
        case Variant::kBasicFcg:
            opts.channel_function_retrieval = false;
            break;
        case Variant::kFrOnly:
            opts.channel_basic = false;
            opts.apply_fcg_filter = false;
            break;
        case Variant::kFrFcg:
            opts.channel_basic = false;
            break;
        case Variant::kFull:
            break;
        case Variant::kFullMinusFcg:
            opts.apply_fcg_filter = false;
            break;
    }
    return opts;
}

}  // namespace

AblationResult run_ablation(const SyntheticCorpus& corpus,
                            const TplDatabase& db, const EmbeddingModel* model,
                            const std::vector<Variant>& variants,
                            const RetrievalConfig& cfg) {
    AblationResult result;
    for (Variant variant : variants) {
        ScanOptions opts = options_for(variant, cfg);
        if (!model) {
            // Without a model only pure basic matching can run.
            opts.channel_function_retrieval = false;
            opts.apply_fcg_filter = false;
        }

        std::size_t sum_correct = 0;
        std::size_t sum_reported = 0;
        std::size_t sum_truth = 0;
        std::map<std::string, std::string> reported_versions;  // target/lib key
        std::map<std::string, std::string> true_versions;
        for (const auto& target : corpus.targets) {
            const DetectionReport report = scan(target, db, model, opts);
            const auto& truth = corpus.truth.targets.at(target.binary_id);
            std::set<std::string> truth_libs;
            for (const auto& [lib, version] : truth) {
                truth_libs.insert(lib);
                true_versions[target.binary_id + "/" + lib] = version;
            }
            sum_truth += truth_libs.size();
            sum_reported += report.libraries.size();
            for (const auto& lib : report.libraries) {
                if (truth_libs.count(lib.library)) {
                    ++sum_correct;
                    reported_versions[target.binary_id + "/" + lib.library] =
                        lib.best_version;
                }
            }
        }

        VariantMetrics row;
        row.variant = variant;
        row.pr.precision_defined = sum_reported > 0;
        row.pr.precision =
            sum_reported > 0
                ? static_cast<double>(sum_correct) / sum_reported
                : 0.0;
        row.pr.recall = sum_truth > 0
                            ? static_cast<double>(sum_correct) / sum_truth
                            : 0.0;
        row.pr.f1 = (row.pr.precision + row.pr.recall) > 0
                        ? 2.0 * row.pr.precision * row.pr.recall /
                              (row.pr.precision + row.pr.recall)
                        : 0.0;
        row.versions = version_metrics(reported_versions, true_versions);
        result.rows.push_back(std::move(row));
    }
    return result;
}

std::string ablation_to_csv(const AblationResult& result) {
    std::ostringstream out;
    out << "variant,precision,recall,f1,vp,mean_vd,true_positives\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& row : result.rows) {
        out << variant_name(row.variant) << "," << row.pr.precision << ","
            << row.pr.recall << "," << row.pr.f1 << "," << row.versions.vp
            << "," << row.versions.mean_vd << ","
            << row.versions.true_positives << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Corpus I/O
// ---------------------------------------------------------------------------

void write_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "units");
    fs::create_directories(fs::path(dir) / "targets");
    for (const auto& unit : corpus.units) {
        save_manifest(unit,
                      (fs::path(dir) / "units" / (unit.binary_id + ".json"))
                          .string());
    }
    for (const auto& target : corpus.targets) {
        save_manifest(
            target,
            (fs::path(dir) / "targets" / (target.binary_id + ".json")).string());
    }
    json truth = json::object();
    for (const auto& [target, libs] : corpus.truth.targets) {
        truth[target] = libs;
    }
    std::ofstream out(fs::path(dir) / "ground_truth.json");
    out << truth.dump(2) << "\n";
}

SyntheticCorpus read_corpus(const std::string& dir) {
    SyntheticCorpus corpus;
    auto load_dir = [](const fs::path& path) {
        std::vector<std::string> files;
        if (fs::exists(path)) {
            for (const auto& entry : fs::directory_iterator(path)) {
                if (entry.path().extension() == ".json") {
                    files.push_back(entry.path().string());
                }
            }
        }
        std::sort(files.begin(), files.end());
        return files;
    };
    for (const auto& file : load_dir(fs::path(dir) / "units")) {
        corpus.units.push_back(load_manifest(file));
    }
    for (const auto& file : load_dir(fs::path(dir) / "targets")) {
        corpus.targets.push_back(load_manifest(file));
    }
    const fs::path truth_path = fs::path(dir) / "ground_truth.json";
    std::ifstream in(truth_path);
    if (!in) {
        throw ValidationError("missing " + truth_path.string());
    }
    json truth;
    try {
        in >> truth;
    } catch (const json::parse_error& e) {
        throw ValidationError("invalid ground truth: " + std::string(e.what()));
    }
    for (const auto& [target, libs] : truth.items()) {
        for (const auto& [lib, version] : libs.items()) {
            corpus.truth.targets[target][lib] = version.get<std::string>();
        }
    }
    return corpus;
}

}  // namespace tplscan
