#pragma once

#include <array>
#include <compare>
#include <string>

namespace tplscan {

// Major.Minor.Patch with missing components read as 0. Non-numeric suffixes
// ("1.2.3-rc1") are dropped from the parsed triple; raw text is preserved.
struct Version {
    int major = 0;
    int minor = 0;
    int patch = 0;
    std::string raw;

    // Throws ParseError when no leading numeric component exists.
    static Version parse(const std::string& text);

    std::strong_ordering operator<=>(const Version& other) const {
        if (auto c = major <=> other.major; c != 0) return c;
        if (auto c = minor <=> other.minor; c != 0) return c;
        return patch <=> other.patch;
    }
    bool operator==(const Version& other) const {
        return (*this <=> other) == 0;
    }
};

// Per-component distance weights for major/minor/patch steps.
struct VersionDistanceWeights {
    double major = 10.0;
    double minor = 1.0;
    double patch = 0.1;
};

// Weighted L1 distance between two version triples.
double version_distance(const Version& a, const Version& b,
                        const VersionDistanceWeights& w = {});
double version_distance(const std::string& a, const std::string& b,
                        const VersionDistanceWeights& w = {});

}  // namespace tplscan
