#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tplscan/detection.hpp"
#include "tplscan/version.hpp"

namespace tplscan {

struct UnitEvidence {
    std::string unit;
    std::string version;
    Channel channel = Channel::kBasic;
    int score = 0;
    std::size_t matched_pair_count = 0;
    std::size_t matched_feature_count = 0;
};

struct DetectedLibrary {
    std::string library;
    std::string best_version;
    std::map<std::string, int> version_scores;
    std::vector<UnitEvidence> evidence;
};

struct DetectionReport {
    std::string target_id;
    std::vector<DetectedLibrary> libraries;  // sorted by library id
};

// Distinct libraries of the surviving candidates, with per-unit evidence.
std::vector<DetectedLibrary> report_libraries(
    const std::vector<Candidate>& final_candidates);

// Per-version score = sum of candidate scores of that version's units;
// winner = argmax, ties broken by the latest version.
std::pair<Version, std::map<std::string, int>> identify_version(
    const std::vector<Candidate>& library_candidates);

DetectionReport build_report(const std::string& target_id,
                             const std::vector<Candidate>& final_candidates);

nlohmann::json report_to_json(const DetectionReport& report);
DetectionReport report_from_json(const nlohmann::json& doc);
std::string report_to_text(const DetectionReport& report);

}  // namespace tplscan
