#include "tplscan/version.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "tplscan/errors.hpp"

namespace tplscan {

Version Version::parse(const std::string& text) {
    Version v;
    v.raw = text;
    const char* p = text.c_str();
    int components[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(*p))) {
            if (i == 0) {
                throw ParseError("unparseable version '" + text + "'");
            }
            break;  // non-numeric suffix or missing component
        }
        char* end = nullptr;
        components[i] = static_cast<int>(std::strtol(p, &end, 10));
        p = end;
        if (*p != '.') {
            break;
        }
        ++p;
    }
    v.major = components[0];
    v.minor = components[1];
    v.patch = components[2];
    return v;
}

double version_distance(const Version& a, const Version& b,
                        const VersionDistanceWeights& w) {
    return w.major * std::abs(a.major - b.major) +
           w.minor * std::abs(a.minor - b.minor) +
           w.patch * std::abs(a.patch - b.patch);
}

double version_distance(const std::string& a, const std::string& b,
                        const VersionDistanceWeights& w) {
    return version_distance(Version::parse(a), Version::parse(b), w);
}

}  // namespace tplscan
