#include "tplscan/report.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"

namespace tplscan {

using nlohmann::json;

namespace {

const char* channel_name(Channel c) {
    return c == Channel::kBasic ? "basic" : "function_retrieval";
}

Channel channel_from_name(const std::string& name) {
    if (name == "basic") return Channel::kBasic;
    if (name == "function_retrieval") return Channel::kFunctionRetrieval;
    throw ValidationError("unknown channel '" + name + "'");
}

UnitEvidence evidence_for(const Candidate& cand) {
    UnitEvidence ev;
    ev.unit = cand.unit.unit;
    ev.version = cand.unit.version;
    ev.channel = cand.channel;
    ev.score = cand.score;
    ev.matched_pair_count = cand.matched_pairs.size();
    ev.matched_feature_count =
        cand.matched_strings.size() + cand.matched_exports.size();
    return ev;
}

}  // namespace

std::pair<Version, std::map<std::string, int>> identify_version(
    const std::vector<Candidate>& library_candidates) {
    if (library_candidates.empty()) {
        throw DomainError("identify_version needs at least one candidate");
    }
    std::map<std::string, int> scores;
    for (const auto& cand : library_candidates) {
        scores[cand.unit.version] += cand.score;
    }
    Version best;
    int best_score = 0;
    bool first = true;
    for (const auto& [version_text, score] : scores) {
        Version v = Version::parse(version_text);
        // Ties go to the latest version under (major, minor, patch).
        if (first || score > best_score ||
            (score == best_score && v > best)) {
            best = v;
            best_score = score;
            first = false;
        }
    }
    return {best, scores};
}

std::vector<DetectedLibrary> report_libraries(
    const std::vector<Candidate>& final_candidates) {
    std::map<std::string, std::vector<Candidate>> by_library;
    for (const auto& cand : final_candidates) {
        by_library[cand.unit.library].push_back(cand);
    }
    std::vector<DetectedLibrary> out;
    for (const auto& [library, cands] : by_library) {
        DetectedLibrary lib;
        lib.library = library;
        auto [best, scores] = identify_version(cands);
        lib.best_version = best.raw;
        lib.version_scores = std::move(scores);
        for (const auto& cand : cands) {
            lib.evidence.push_back(evidence_for(cand));
        }
        std::sort(lib.evidence.begin(), lib.evidence.end(),
                  [](const UnitEvidence& a, const UnitEvidence& b) {
                      return a.unit < b.unit;
                  });
        out.push_back(std::move(lib));
    }
    return out;
}

DetectionReport build_report(const std::string& target_id,
                             const std::vector<Candidate>& final_candidates) {
    DetectionReport report;
    report.target_id = target_id;
    report.libraries = report_libraries(final_candidates);
    return report;
}

json report_to_json(const DetectionReport& report) {
    json doc;
    doc["target"] = report.target_id;
    doc["libraries"] = json::array();
    for (const auto& lib : report.libraries) {
        json entry;
        entry["library"] = lib.library;
        entry["version"] = lib.best_version;
        entry["version_scores"] = lib.version_scores;
        entry["evidence"] = json::array();
        for (const auto& ev : lib.evidence) {
            entry["evidence"].push_back(
                {{"unit", ev.unit},
                 {"version", ev.version},
                 {"channel", channel_name(ev.channel)},
                 {"score", ev.score},
                 {"matched_pairs", ev.matched_pair_count},
                 {"matched_features", ev.matched_feature_count}});
        }
        doc["libraries"].push_back(std::move(entry));
    }
    return doc;
}

DetectionReport report_from_json(const json& doc) {
    DetectionReport report;
    report.target_id = doc.at("target").get<std::string>();
    for (const auto& entry : doc.at("libraries")) {
        DetectedLibrary lib;
        lib.library = entry.at("library").get<std::string>();
        lib.best_version = entry.at("version").get<std::string>();
        for (const auto& [version, score] : entry.at("version_scores").items()) {
            lib.version_scores[version] = score.get<int>();
        }
        for (const auto& ev_doc : entry.at("evidence")) {
            UnitEvidence ev;
            ev.unit = ev_doc.at("unit").get<std::string>();
            ev.version = ev_doc.at("version").get<std::string>();
            ev.channel = channel_from_name(ev_doc.at("channel").get<std::string>());
            ev.score = ev_doc.at("score").get<int>();
            ev.matched_pair_count = ev_doc.at("matched_pairs").get<std::size_t>();
            ev.matched_feature_count =
                ev_doc.at("matched_features").get<std::size_t>();
            lib.evidence.push_back(std::move(ev));
        }
        report.libraries.push_back(std::move(lib));
    }
    return report;
}

std::string report_to_text(const DetectionReport& report) {
    std::ostringstream out;
    out << "target: " << report.target_id << "\n";
    if (report.libraries.empty()) {
        out << "  no libraries detected\n";
        return out.str();
    }
    for (const auto& lib : report.libraries) {
        out << "  " << lib.library << " " << lib.best_version << "\n";
        out << "    version scores:";
        for (const auto& [version, score] : lib.version_scores) {
            out << " " << version << "=" << score;
        }
        out << "\n";
        for (const auto& ev : lib.evidence) {
            out << "    unit " << ev.unit << " (" << ev.version << ", "
                << channel_name(ev.channel) << "): score " << ev.score
                << ", pairs " << ev.matched_pair_count << ", features "
                << ev.matched_feature_count << "\n";
        }
    }
    return out.str();
}

}  // namespace tplscan
