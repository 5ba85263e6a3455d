#include "tplscan/manifest.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"

namespace tplscan {

using nlohmann::json;

namespace {

const json& require(const json& doc, const char* field, const std::string& path) {
    auto it = doc.find(field);
    if (it == doc.end()) {
        throw ValidationError("missing field " + path + field);
    }
    return *it;
}

void expect_array(const json& value, const std::string& path) {
    if (!value.is_array()) {
        throw ValidationError("expected array at " + path);
    }
}

std::string expect_string(const json& value, const std::string& path) {
    if (!value.is_string()) {
        throw ValidationError("expected string at " + path);
    }
    return value.get<std::string>();
}

double expect_number(const json& value, const std::string& path) {
    if (!value.is_number()) {
        throw ValidationError("expected number at " + path);
    }
    return value.get<double>();
}

}  // namespace

BinaryFeatureSet feature_set_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw ValidationError("expected object at $");
    }
    BinaryFeatureSet fs;
    fs.binary_id = expect_string(require(doc, "binary_id", "$."), "$.binary_id");
    if (fs.binary_id.empty()) {
        throw ValidationError("empty string at $.binary_id");
    }

    const json& strings = require(doc, "strings", "$.");
    expect_array(strings, "$.strings");
    for (std::size_t i = 0; i < strings.size(); ++i) {
        std::string value =
            expect_string(strings[i], "$.strings[" + std::to_string(i) + "]");
        if (!value.empty()) {
            fs.strings.insert({value, string_weight(value)});
        }
    }

    const json& exports = require(doc, "exports", "$.");
    expect_array(exports, "$.exports");
    for (std::size_t i = 0; i < exports.size(); ++i) {
        std::string name =
            expect_string(exports[i], "$.exports[" + std::to_string(i) + "]");
        if (!name.empty()) {
            fs.exports.insert({name});
        }
    }

    const json& functions = require(doc, "functions", "$.");
    expect_array(functions, "$.functions");
    for (std::size_t i = 0; i < functions.size(); ++i) {
        const std::string fpath = "$.functions[" + std::to_string(i) + "]";
        const json& fn = functions[i];
        if (!fn.is_object()) {
            throw ValidationError("expected object at " + fpath);
        }
        Acfg acfg;
        acfg.function_id = expect_string(require(fn, "id", fpath + "."), fpath + ".id");
        if (acfg.function_id.empty()) {
            throw ValidationError("empty string at " + fpath + ".id");
        }
        if (fs.acfgs.count(acfg.function_id)) {
            throw ValidationError("duplicate function id at " + fpath + ".id");
        }

        const json& blocks = require(fn, "blocks", fpath + ".");
        expect_array(blocks, fpath + ".blocks");
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string bpath = fpath + ".blocks[" + std::to_string(b) + "]";
            expect_array(blocks[b], bpath);
            if (blocks[b].size() != kBlockAttrCount) {
                throw ValidationError("expected " + std::to_string(kBlockAttrCount) +
                                      " attributes at " + bpath);
            }
            BasicBlockAttrs attrs;
            for (int a = 0; a < kBlockAttrCount; ++a) {
                double v = expect_number(blocks[b][a],
                                         bpath + "[" + std::to_string(a) + "]");
                if (v < 0) {
                    throw ValidationError("negative attribute at " + bpath + "[" +
                                          std::to_string(a) + "]");
                }
                attrs[a] = v;
            }
            acfg.blocks.push_back(attrs);
        }

        const json& edges = require(fn, "edges", fpath + ".");
        expect_array(edges, fpath + ".edges");
        std::set<std::pair<int, int>> seen;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const std::string epath = fpath + ".edges[" + std::to_string(e) + "]";
            expect_array(edges[e], epath);
            if (edges[e].size() != 2) {
                throw ValidationError("expected [src, dst] at " + epath);
            }
            int src = static_cast<int>(expect_number(edges[e][0], epath + "[0]"));
            int dst = static_cast<int>(expect_number(edges[e][1], epath + "[1]"));
            if (src < 0 || dst < 0 || src >= acfg.block_count() ||
                dst >= acfg.block_count()) {
                throw IntegrityError("block edge out of range at " + epath);
            }
            if (seen.insert({src, dst}).second) {
                acfg.edges.emplace_back(src, dst);
            }
        }
        fs.fcg.nodes.insert(acfg.function_id);
        fs.acfgs.emplace(acfg.function_id, std::move(acfg));
    }

    const json& fcg_edges = require(doc, "fcg_edges", "$.");
    expect_array(fcg_edges, "$.fcg_edges");
    for (std::size_t i = 0; i < fcg_edges.size(); ++i) {
        const std::string epath = "$.fcg_edges[" + std::to_string(i) + "]";
        expect_array(fcg_edges[i], epath);
        if (fcg_edges[i].size() != 2) {
            throw ValidationError("expected [caller, callee] at " + epath);
        }
        std::string caller = expect_string(fcg_edges[i][0], epath + "[0]");
        std::string callee = expect_string(fcg_edges[i][1], epath + "[1]");
        if (!fs.fcg.nodes.count(caller)) {
            throw IntegrityError("FCG edge references undeclared function '" +
                                 caller + "' at " + epath + "[0]");
        }
        if (!fs.fcg.nodes.count(callee)) {
            throw IntegrityError("FCG edge references undeclared function '" +
                                 callee + "' at " + epath + "[1]");
        }
        fs.fcg.edges.insert({std::move(caller), std::move(callee)});
    }

    if (auto it = doc.find("library"); it != doc.end()) {
        fs.library = expect_string(*it, "$.library");
    }
    if (auto it = doc.find("version"); it != doc.end()) {
        fs.version = expect_string(*it, "$.version");
    }
    return fs;
}

json feature_set_to_json(const BinaryFeatureSet& fs) {
    json doc;
    doc["binary_id"] = fs.binary_id;
    doc["strings"] = json::array();
    for (const auto& s : fs.strings) {
        doc["strings"].push_back(s.value);
    }
    doc["exports"] = json::array();
    for (const auto& e : fs.exports) {
        doc["exports"].push_back(e.name);
    }
    doc["functions"] = json::array();
    for (const auto& [id, acfg] : fs.acfgs) {
        json fn;
        fn["id"] = id;
        fn["blocks"] = json::array();
        for (const auto& block : acfg.blocks) {
            fn["blocks"].push_back(block.values);
        }
        fn["edges"] = json::array();
        for (const auto& [src, dst] : acfg.edges) {
            fn["edges"].push_back({src, dst});
        }
        doc["functions"].push_back(std::move(fn));
    }
    doc["fcg_edges"] = json::array();
    for (const auto& [caller, callee] : fs.fcg.edges) {
        doc["fcg_edges"].push_back({caller, callee});
    }
    if (!fs.library.empty()) {
        doc["library"] = fs.library;
    }
    if (!fs.version.empty()) {
        doc["version"] = fs.version;
    }
    return doc;
}

BinaryFeatureSet load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open manifest " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ParseError("invalid JSON in " + path + ": " + e.what());
    }
    return feature_set_from_json(doc);
}

void save_manifest(const BinaryFeatureSet& fs, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot write manifest " + path);
    }
    out << feature_set_to_json(fs).dump(2) << "\n";
}

}  // namespace tplscan
