#include "tplscan/pipeline.hpp"

#include "tplscan/errors.hpp"

namespace tplscan {

TplDatabase build_database(const std::vector<BinaryFeatureSet>& units,
                           const EmbeddingModel* model) {
    TplDatabase db;
    for (const auto& unit : units) {
        db.index_unit(unit, embed_target(unit, model));
    }
    return db;
}

std::vector<FunctionVector> embed_target(const BinaryFeatureSet& target,
                                         const EmbeddingModel* model) {
    std::vector<FunctionVector> out;
    if (!model) {
        return out;
    }
    for (const Acfg* acfg : embeddable_functions(target)) {
        out.push_back(
            {acfg->function_id, target.binary_id, embed_acfg(*acfg, *model)});
    }
    return out;
}

std::vector<Candidate> scan_candidates(const BinaryFeatureSet& target,
                                       const TplDatabase& db,
                                       const EmbeddingModel* model,
                                       const ScanOptions& opts) {
    if (opts.channel_function_retrieval && !model) {
        throw ConfigError(
            "function retrieval channel enabled but no model is loaded");
    }

    const std::vector<FunctionVector> target_vectors =
        embed_target(target, model);

    std::vector<Candidate> candidates;
    if (opts.channel_basic) {
        candidates = match_basic(target, db, opts.retrieval);
    }
    if (opts.channel_function_retrieval) {
        auto list_b = retrieve_candidates(target_vectors, db, opts.retrieval);
        candidates.insert(candidates.end(),
                          std::make_move_iterator(list_b.begin()),
                          std::make_move_iterator(list_b.end()));
    }

    if (!opts.apply_fcg_filter) {
        return merge_unfiltered(candidates);
    }
    if (!model) {
        throw ConfigError("FCG filter enabled but no model is loaded");
    }
    return fcg_filter(candidates, target, target_vectors, db, opts.retrieval);
}

DetectionReport scan(const BinaryFeatureSet& target, const TplDatabase& db,
                     const EmbeddingModel* model, const ScanOptions& opts) {
    return build_report(target.binary_id,
                        scan_candidates(target, db, model, opts));
}

}  // namespace tplscan
