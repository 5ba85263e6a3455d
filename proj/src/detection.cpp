#include "tplscan/detection.hpp"

#include <algorithm>
#include <map>
#include <queue>

#include "tplscan/errors.hpp"

namespace tplscan {

std::vector<Candidate> match_basic(const BinaryFeatureSet& target,
                                   const TplDatabase& db,
                                   const RetrievalConfig& cfg) {
    struct Common {
        std::set<StringLiteral> strings;
        std::set<ExportedName> exports;
        double weight_sum = 0.0;
    };
    std::map<std::string, Common> by_unit;
    for (const auto& s : target.strings) {
        if (const auto* units = db.index().lookup_string(s.value)) {
            for (const auto& unit_id : *units) {
                Common& c = by_unit[unit_id];
                c.strings.insert(s);
                c.weight_sum += s.weight;
            }
        }
    }
    for (const auto& e : target.exports) {
        if (const auto* units = db.index().lookup_export(e.name)) {
            for (const auto& unit_id : *units) {
                by_unit[unit_id].exports.insert(e);
            }
        }
    }

    std::vector<Candidate> out;
    for (auto& [unit_id, common] : by_unit) {
        const double unit_strings =
            static_cast<double>(db.index().unit_string_count(unit_id));
        const double unit_weight = db.index().unit_weight_sum(unit_id);
        const bool rule_strings =
            unit_strings > 0 &&
            static_cast<double>(common.strings.size()) / unit_strings >
                cfg.string_proportion_threshold;
        const bool rule_weights =
            common.weight_sum > cfg.weight_sum_threshold && unit_weight > 0 &&
            common.weight_sum / unit_weight > cfg.weight_proportion_threshold;
        const bool rule_exports =
            static_cast<int>(common.exports.size()) > cfg.export_count_threshold;
        if (!(rule_strings || rule_weights || rule_exports)) {
            continue;
        }
        Candidate cand;
        cand.unit = db.unit_ref(unit_id);
        cand.channel = Channel::kBasic;
        cand.matched_strings = std::move(common.strings);
        cand.matched_exports = std::move(common.exports);
        out.push_back(std::move(cand));
    }
    return out;
}

std::vector<Candidate> retrieve_candidates(
    const std::vector<FunctionVector>& target_vectors, const TplDatabase& db,
    const RetrievalConfig& cfg) {
    struct UnitHits {
        std::set<std::string> similar_functions;  // distinct unit functions hit
        std::set<MatchedPair> pairs;
    };
    std::map<std::string, UnitHits> by_unit;
    for (const auto& target_vec : target_vectors) {
        for (const auto& hit :
             db.store().topk(target_vec.vector, cfg.neighbors_per_function)) {
            UnitHits& u = by_unit[hit.unit_id];
            u.similar_functions.insert(hit.function_id);
            u.pairs.insert(
                {target_vec.function_id, hit.function_id, hit.score});
        }
    }

    std::vector<std::pair<std::string, const UnitHits*>> ranked;
    for (const auto& [unit_id, hits] : by_unit) {
        ranked.emplace_back(unit_id, &hits);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second->similar_functions.size() !=
            b.second->similar_functions.size()) {
            return a.second->similar_functions.size() >
                   b.second->similar_functions.size();
        }
        return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > cfg.unit_cap) {
        ranked.resize(cfg.unit_cap);
    }

    std::vector<Candidate> out;
    for (const auto& [unit_id, hits] : ranked) {
        Candidate cand;
        cand.unit = db.unit_ref(unit_id);
        cand.channel = Channel::kFunctionRetrieval;
        cand.matched_pairs = hits->pairs;
        out.push_back(std::move(cand));
    }
    return out;
}

std::set<MatchedPair> pair_functions(
    const std::vector<FunctionVector>& target_vectors,
    const std::vector<const FunctionVector*>& unit_vectors,
    double cosine_threshold) {
    std::set<MatchedPair> pairs;
    for (const auto& target_vec : target_vectors) {
        const FunctionVector* best = nullptr;
        double best_cos = -2.0;
        for (const FunctionVector* unit_vec : unit_vectors) {
            const double c = target_vec.vector.dot(unit_vec->vector);
            // Deterministic argmax: prefer the smaller function id on ties.
            if (c > best_cos ||
                (c == best_cos && best &&
                 unit_vec->function_id < best->function_id)) {
                best_cos = c;
                best = unit_vec;
            }
        }
        if (best && best_cos > cosine_threshold) {
            pairs.insert({target_vec.function_id, best->function_id, best_cos});
        }
    }
    return pairs;
}

MiniFcg build_mini_fcg(const Fcg& fcg, const std::set<std::string>& anchors) {
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [caller, callee] : fcg.edges) {
        succ[caller].push_back(callee);
    }

    MiniFcg mini;
    mini.anchors = anchors;
    for (const auto& anchor : anchors) {
        // BFS from the anchor through non-anchor interior nodes only.
        std::set<std::string> visited;
        std::queue<std::string> frontier;
        auto expand = [&](const std::string& node) {
            auto it = succ.find(node);
            if (it == succ.end()) {
                return;
            }
            for (const auto& next : it->second) {
                if (visited.insert(next).second) {
                    if (anchors.count(next)) {
                        if (next != anchor) {
                            mini.edges.insert({anchor, next});
                        }
                    } else {
                        frontier.push(next);
                    }
                }
            }
        };
        expand(anchor);
        while (!frontier.empty()) {
            std::string node = std::move(frontier.front());
            frontier.pop();
            expand(node);
        }
    }
    return mini;
}

int common_edges(const MiniFcg& mini_target, const MiniFcg& mini_unit,
                 const std::set<MatchedPair>& pairs) {
    std::map<std::string, std::set<std::string>> mapping;
    for (const auto& pair : pairs) {
        mapping[pair.target_function].insert(pair.unit_function);
    }
    int count = 0;
    for (const auto& [f1, f2] : mini_target.edges) {
        auto m1 = mapping.find(f1);
        auto m2 = mapping.find(f2);
        if (m1 == mapping.end() || m2 == mapping.end()) {
            continue;
        }
        bool found = false;
        for (const auto& f1p : m1->second) {
            for (const auto& f2p : m2->second) {
                if (mini_unit.edges.count({f1p, f2p})) {
                    found = true;
                    break;
                }
            }
            if (found) break;
        }
        if (found) {
            ++count;
        }
    }
    return count;
}

namespace {

// Candidates surviving both channels collapse to one entry with the maximum
// score; channel-A evidence wins on a tie so the basic-feature match stays
// visible in reports.
std::vector<Candidate> merge_by_unit(std::vector<Candidate> candidates) {
    std::map<std::string, Candidate> merged;
    for (auto& cand : candidates) {
        auto it = merged.find(cand.unit.unit);
        if (it == merged.end()) {
            merged.emplace(cand.unit.unit, std::move(cand));
        } else if (cand.score > it->second.score ||
                   (cand.score == it->second.score &&
                    cand.channel == Channel::kBasic &&
                    it->second.channel == Channel::kFunctionRetrieval)) {
            it->second = std::move(cand);
        }
    }
    std::vector<Candidate> out;
    for (auto& [unit_id, cand] : merged) {
        out.push_back(std::move(cand));
    }
    return out;
}

}  // namespace

std::vector<Candidate> fcg_filter(const std::vector<Candidate>& candidates,
                                  const BinaryFeatureSet& target,
                                  const std::vector<FunctionVector>& target_vectors,
                                  const TplDatabase& db,
                                  const RetrievalConfig& cfg) {
    std::vector<Candidate> kept;
    for (const Candidate& cand : candidates) {
        if (!db.has_unit(cand.unit.unit)) {
            throw IntegrityError("candidate unit '" + cand.unit.unit +
                                 "' has no payload in the database");
        }
        const auto& rec = db.unit(cand.unit.unit);

        std::set<MatchedPair> pairs;
        if (cand.channel == Channel::kBasic) {
            pairs = pair_functions(target_vectors,
                                   db.unit_vectors(cand.unit.unit),
                                   cfg.pairing_cosine_threshold);
        } else {
            // Retrieval pairs are reused; the cosine threshold still applies
            // before anchoring.
            for (const auto& pair : cand.matched_pairs) {
                if (pair.cosine > cfg.pairing_cosine_threshold) {
                    pairs.insert(pair);
                }
            }
        }

        std::set<std::string> target_anchors;
        std::set<std::string> unit_anchors;
        for (const auto& pair : pairs) {
            target_anchors.insert(pair.target_function);
            unit_anchors.insert(pair.unit_function);
        }
        const MiniFcg mini_target = build_mini_fcg(target.fcg, target_anchors);
        const MiniFcg mini_unit = build_mini_fcg(rec.fcg, unit_anchors);
        const int score = common_edges(mini_target, mini_unit, pairs);

        const int threshold = cand.channel == Channel::kBasic
                                  ? cfg.channel_a_edge_threshold
                                  : cfg.channel_b_edge_threshold;
        if (score >= threshold) {
            Candidate survivor = cand;
            survivor.score = score;
            survivor.matched_pairs = std::move(pairs);
            kept.push_back(std::move(survivor));
        }
    }
    return merge_by_unit(std::move(kept));
}

std::vector<Candidate> merge_unfiltered(const std::vector<Candidate>& candidates) {
    return merge_by_unit(candidates);
}

}  // namespace tplscan
