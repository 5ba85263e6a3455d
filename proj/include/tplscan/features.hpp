#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace tplscan {

// Weighted string literal pulled from a binary's data sections.
struct StringLiteral {
    std::string value;
    double weight = 0.0;

    auto operator<=>(const StringLiteral&) const = default;
};

struct ExportedName {
    std::string name;

    auto operator<=>(const ExportedName&) const = default;
};

// Per-block attribute vector, fixed order:
//   [0] string constant count
//   [1] numeric constant count
//   [2] transfer instruction count
//   [3] call instruction count
//   [4] total instruction count
//   [5] arithmetic instruction count
//   [6] offspring count (blocks reachable from this block)
constexpr int kBlockAttrCount = 7;

struct BasicBlockAttrs {
    std::array<double, kBlockAttrCount> values{};

    double& operator[](int i) { return values[i]; }
    double operator[](int i) const { return values[i]; }
    bool operator==(const BasicBlockAttrs&) const = default;
};

// Attributed control-flow graph of one function.
struct Acfg {
    std::string function_id;
    std::vector<BasicBlockAttrs> blocks;
    std::vector<std::pair<int, int>> edges;  // directed block-index pairs

    int block_count() const { return static_cast<int>(blocks.size()); }
};

// Function-call graph: directed caller -> callee edges over function ids.
struct Fcg {
    std::set<std::string> nodes;
    std::set<std::pair<std::string, std::string>> edges;
};

// All features of one binary; the unit of comparison.
struct BinaryFeatureSet {
    std::string binary_id;
    std::set<StringLiteral> strings;
    std::set<ExportedName> exports;
    std::map<std::string, Acfg> acfgs;  // function id -> ACFG
    Fcg fcg;
    // Provenance is set when the binary is a database unit, empty for targets.
    std::string library;
    std::string version;
};

// Weight of a string literal at index time: min(length, 50), doubled when the
// string looks like a URL or a path.
double string_weight(const std::string& value);

// Number of distinct blocks reachable from each block via directed edges.
// A block counts itself only when it lies on a cycle through itself.
std::vector<int> compute_offspring(const std::vector<std::pair<int, int>>& edges,
                                   int block_count);

// ACFGs eligible for embedding: block_count >= min_blocks (default 5),
// ordered by function id.
std::vector<const Acfg*> embeddable_functions(const BinaryFeatureSet& fs,
                                              int min_blocks = 5);

}  // namespace tplscan
