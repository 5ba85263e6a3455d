#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"
#include "tplscan/features.hpp"
#include "tplscan/manifest.hpp"

using namespace tplscan;
using nlohmann::json;

namespace {

json minimal_doc() {
    return json{
        {"binary_id", "bin1"},
        {"strings", json::array({"hello world", "http://example.com"})},
        {"exports", json::array({"foo", "bar"})},
        {"functions",
         json::array({json{{"id", "f1"},
                           {"blocks", json::array({json::array({1, 2, 3, 4, 5, 6, 0}),
                                                   json::array({0, 0, 1, 0, 2, 1, 0})})},
                           {"edges", json::array({json::array({0, 1})})}}})},
        {"fcg_edges", json::array({json::array({"f1", "f1"})})},
    };
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("tplscan_test_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace

TEST_CASE("manifest parses the documented fields") {
    auto fs = feature_set_from_json(minimal_doc());
    CHECK(fs.binary_id == "bin1");
    REQUIRE(fs.strings.size() == 2);
    // Weights are recomputed from the raw string at load.
    CHECK(fs.strings.count({"hello world", 11.0}) == 1);
    CHECK(fs.strings.count({"http://example.com", 36.0}) == 1);
    CHECK(fs.exports == std::set<ExportedName>{{"bar"}, {"foo"}});
    REQUIRE(fs.acfgs.count("f1") == 1);
    const Acfg& f1 = fs.acfgs.at("f1");
    CHECK(f1.block_count() == 2);
    CHECK(f1.blocks[0][0] == 1.0);
    CHECK(f1.blocks[0][6] == 0.0);
    CHECK(f1.edges == std::vector<std::pair<int, int>>{{0, 1}});
    CHECK(fs.fcg.nodes == std::set<std::string>{"f1"});
    CHECK(fs.library.empty());
    CHECK(fs.version.empty());
}

TEST_CASE("manifest keeps optional provenance") {
    auto doc = minimal_doc();
    doc["library"] = "zlib";
    doc["version"] = "1.2.11";
    auto fs = feature_set_from_json(doc);
    CHECK(fs.library == "zlib");
    CHECK(fs.version == "1.2.11");
}

TEST_CASE("manifest JSON round-trip is the identity") {
    auto doc = minimal_doc();
    doc["library"] = "openssl";
    doc["version"] = "3.0.1";
    auto fs = feature_set_from_json(doc);
    auto fs2 = feature_set_from_json(feature_set_to_json(fs));
    CHECK(fs2.binary_id == fs.binary_id);
    CHECK(fs2.strings == fs.strings);
    CHECK(fs2.exports == fs.exports);
    CHECK(fs2.fcg.nodes == fs.fcg.nodes);
    CHECK(fs2.fcg.edges == fs.fcg.edges);
    CHECK(fs2.library == fs.library);
    CHECK(fs2.version == fs.version);
    REQUIRE(fs2.acfgs.size() == fs.acfgs.size());
    for (const auto& [id, acfg] : fs.acfgs) {
        REQUIRE(fs2.acfgs.count(id) == 1);
        CHECK(fs2.acfgs.at(id).blocks == acfg.blocks);
        CHECK(fs2.acfgs.at(id).edges == acfg.edges);
    }
}

TEST_CASE("validation errors name the offending field path") {
    SUBCASE("missing binary_id") {
        auto doc = minimal_doc();
        doc.erase("binary_id");
        CHECK_THROWS_WITH_AS(feature_set_from_json(doc),
                             doctest::Contains("$.binary_id"), ValidationError);
    }
    SUBCASE("wrong attribute count") {
        auto doc = minimal_doc();
        doc["functions"][0]["blocks"][0] = json::array({1, 2, 3});
        CHECK_THROWS_WITH_AS(feature_set_from_json(doc),
                             doctest::Contains("$.functions[0].blocks[0]"),
                             ValidationError);
    }
    SUBCASE("negative attribute") {
        auto doc = minimal_doc();
        doc["functions"][0]["blocks"][1][2] = -1;
        CHECK_THROWS_AS(feature_set_from_json(doc), ValidationError);
    }
    SUBCASE("strings must be an array") {
        auto doc = minimal_doc();
        doc["strings"] = "not-an-array";
        CHECK_THROWS_WITH_AS(feature_set_from_json(doc),
                             doctest::Contains("$.strings"), ValidationError);
    }
    SUBCASE("duplicate function ids") {
        auto doc = minimal_doc();
        doc["functions"].push_back(doc["functions"][0]);
        CHECK_THROWS_AS(feature_set_from_json(doc), ValidationError);
    }
}

TEST_CASE("block edges out of range are an integrity error") {
    auto doc = minimal_doc();
    doc["functions"][0]["edges"].push_back(json::array({0, 5}));
    CHECK_THROWS_AS(feature_set_from_json(doc), IntegrityError);
}

TEST_CASE("dangling FCG edges are an integrity error") {
    auto doc = minimal_doc();
    doc["fcg_edges"].push_back(json::array({"f1", "does_not_exist"}));
    CHECK_THROWS_WITH_AS(feature_set_from_json(doc),
                         doctest::Contains("does_not_exist"), IntegrityError);
}

TEST_CASE("duplicate edges are deduplicated") {
    auto doc = minimal_doc();
    doc["fcg_edges"].push_back(json::array({"f1", "f1"}));
    auto fs = feature_set_from_json(doc);
    CHECK(fs.fcg.edges.size() == 1);
}

TEST_CASE("file round-trip through save and load") {
    TempDir tmp;
    auto fs = feature_set_from_json(minimal_doc());
    const auto path = (tmp.path / "m.json").string();
    save_manifest(fs, path);
    auto fs2 = load_manifest(path);
    CHECK(fs2.binary_id == fs.binary_id);
    CHECK(fs2.strings == fs.strings);
    CHECK(fs2.exports == fs.exports);
}

TEST_CASE("loading a missing or malformed file is a parse error") {
    TempDir tmp;
    CHECK_THROWS_AS(load_manifest((tmp.path / "absent.json").string()), ParseError);
    const auto bad = (tmp.path / "bad.json").string();
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_AS(load_manifest(bad), ParseError);
}
