#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tplscan/commands.hpp"
#include "tplscan/errors.hpp"
#include "tplscan/manifest.hpp"

using namespace tplscan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("tplscan_cmd_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& sub = {}) const {
        return sub.empty() ? path.string() : (path / sub).string();
    }
};

CorpusSpec tiny_spec() {
    CorpusSpec spec;
    spec.seed = 7;
    spec.library_count = 4;
    spec.versions_per_library = 2;
    spec.functions_per_unit = 6;
    spec.strings_per_unit = 12;
    spec.exports_per_unit = 5;
    spec.target_count = 2;
    spec.fuse_fan_in = 2;
    spec.junk_functions_per_target = 1;
    return spec;
}

Config fast_train_config() {
    Config cfg;
    cfg.train_epochs = 3;
    cfg.train_batch_size = 16;
    cfg.embed_dim = 8;
    cfg.iterations = 2;
    return cfg;
}

// End-to-end fixture: corpus on disk, database built from its units, model
// trained on it. Shared by several cases; rebuilt cheaply per test.
struct Workspace {
    TempDir dir;
    Config cfg;

    explicit Workspace(bool with_model) {
        std::ostringstream log;
        cfg = fast_train_config();
        cfg.corpus_path = dir.str("corpus");
        cfg.db_path = dir.str("db");
        REQUIRE(cmd_corpus_gen(tiny_spec(), cfg.corpus_path, log) == kExitOk);
        if (with_model) {
            cfg.model_path = dir.str("model.json");
            REQUIRE(cmd_train(cfg, log) == kExitOk);
        }
        REQUIRE(cmd_db_build(cfg.corpus_path + "/units", cfg.db_path, cfg, log) ==
                kExitOk);
    }

    std::string target_path() const {
        return cfg.corpus_path + "/targets/target000.json";
    }
};

}  // namespace

TEST_CASE("corpus gen writes units, targets and ground truth") {
    TempDir dir;
    std::ostringstream log;
    CHECK(cmd_corpus_gen(tiny_spec(), dir.str("corpus"), log) == kExitOk);
    CHECK(fs::exists(dir.path / "corpus" / "units" / "lib000-1.0.0.json"));
    CHECK(fs::exists(dir.path / "corpus" / "targets" / "target000.json"));
    CHECK(fs::exists(dir.path / "corpus" / "ground_truth.json"));
    CHECK(log.str().find("generated 8 units, 2 targets") != std::string::npos);
}

TEST_CASE("db build indexes manifests and persists") {
    Workspace ws(/*with_model=*/false);
    auto db = TplDatabase::load(ws.cfg.db_path);
    CHECK(db.unit_count() == 8);
    CHECK(db.store().size() == 0);  // no model, no vectors
}

TEST_CASE("db build embeds functions when a model is configured") {
    Workspace ws(/*with_model=*/true);
    auto db = TplDatabase::load(ws.cfg.db_path);
    CHECK(db.unit_count() == 8);
    CHECK(db.store().size() > 0);
}

TEST_CASE("db build skips bad manifests with a warning by default") {
    Workspace ws(/*with_model=*/false);
    std::ofstream(ws.cfg.corpus_path + "/units/broken.json") << "{ not json";
    std::ostringstream log;
    TempDir out;
    CHECK(cmd_db_build(ws.cfg.corpus_path + "/units", out.str("db"), ws.cfg, log) ==
          kExitPartial);
    CHECK(log.str().find("warning") != std::string::npos);
    CHECK(log.str().find("broken.json") != std::string::npos);
    // The good units were still indexed.
    CHECK(TplDatabase::load(out.str("db")).unit_count() == 8);
}

TEST_CASE("strict mode fails fast on the first bad input") {
    Workspace ws(/*with_model=*/false);
    std::ofstream(ws.cfg.corpus_path + "/units/aaa_broken.json") << "{ not json";
    Config strict = ws.cfg;
    strict.strict = true;
    std::ostringstream log;
    TempDir out;
    CHECK(cmd_db_build(ws.cfg.corpus_path + "/units", out.str("db"), strict, log) ==
          kExitError);
    CHECK(log.str().find("error") != std::string::npos);
}

TEST_CASE("an exhausted per-binary budget skips the binary") {
    Workspace ws(/*with_model=*/false);
    Config rushed = ws.cfg;
    rushed.timeout_minutes = 1e-9;
    std::ostringstream log;
    TempDir out;
    CHECK(cmd_db_build(ws.cfg.corpus_path + "/units", out.str("db"), rushed, log) ==
          kExitPartial);
    CHECK(log.str().find("timeout") != std::string::npos);
    CHECK(TplDatabase::load(out.str("db")).unit_count() == 0);
}

TEST_CASE("db build of an empty directory warns but succeeds") {
    TempDir dir;
    fs::create_directories(dir.path / "empty");
    std::ostringstream log;
    Config cfg;
    CHECK(cmd_db_build(dir.str("empty"), dir.str("db"), cfg, log) == kExitOk);
    CHECK(log.str().find("no input binaries") != std::string::npos);
}

TEST_CASE("db build of a missing directory is an error") {
    std::ostringstream log;
    Config cfg;
    CHECK(cmd_db_build("/no/such/dir", "/tmp/unused_db", cfg, log) == kExitError);
}

TEST_CASE("extract converts a manifest to a normalized manifest") {
    Workspace ws(/*with_model=*/false);
    std::ostringstream log;
    TempDir out;
    CHECK(cmd_extract(ws.cfg.corpus_path + "/units/lib000-1.0.0.json",
                      out.str("m.json"), ws.cfg, log) == kExitOk);
    auto fs_out = load_manifest(out.str("m.json"));
    CHECK(fs_out.binary_id == "lib000-1.0.0");
    CHECK(fs_out.strings.size() == 12);
}

TEST_CASE("train writes a loadable checkpoint") {
    Workspace ws(/*with_model=*/true);
    auto model = EmbeddingModel::load(ws.cfg.model_path);
    CHECK(model.embed_dim == 8);
    CHECK(model.iterations == 2);
}

TEST_CASE("train without paths is a configuration error") {
    Config cfg;
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_train(cfg, log), ConfigError);
}

TEST_CASE("scan without a database path is a configuration error") {
    Config cfg;
    std::ostringstream log, out;
    CHECK_THROWS_AS(cmd_scan("x.json", cfg, "", out, log), ConfigError);
}

TEST_CASE("scan with retrieval channels but no model is a configuration error") {
    Workspace ws(/*with_model=*/false);
    std::ostringstream log, out;
    Config cfg = ws.cfg;
    cfg.channels = "both";
    CHECK_THROWS_AS(cmd_scan(ws.target_path(), cfg, "", out, log), ConfigError);
}

TEST_CASE("basic-only scan without a model disables the filter with a warning") {
    Workspace ws(/*with_model=*/false);
    std::ostringstream log, out;
    Config cfg = ws.cfg;
    cfg.channels = "basic";
    CHECK(cmd_scan(ws.target_path(), cfg, "", out, log) == kExitOk);
    CHECK(log.str().find("FCG filter disabled") != std::string::npos);
    auto doc = nlohmann::json::parse(out.str());
    CHECK(doc.at("target") == "target000");
    CHECK(doc.at("libraries").is_array());
}

TEST_CASE("scan output is byte-identical across runs") {
    Workspace ws(/*with_model=*/true);
    auto run = [&]() {
        std::ostringstream log, out;
        Config cfg = ws.cfg;
        REQUIRE(cmd_scan(ws.target_path(), cfg, "", out, log) == kExitOk);
        return out.str();
    };
    const std::string first = run();
    CHECK(first == run());
    CHECK(!first.empty());
}

TEST_CASE("scan renders text and writes to a file on request") {
    Workspace ws(/*with_model=*/true);
    std::ostringstream log, out;
    Config cfg = ws.cfg;
    cfg.output_format = "text";
    TempDir outdir;
    CHECK(cmd_scan(ws.target_path(), cfg, outdir.str("report.txt"), out, log) ==
          kExitOk);
    CHECK(out.str().empty());  // report went to the file
    std::ifstream in(outdir.str("report.txt"));
    std::stringstream content;
    content << in.rdbuf();
    CHECK(content.str().find("target: target000") != std::string::npos);
}

TEST_CASE("eval writes CSV and JSON metrics for the chosen variants") {
    Workspace ws(/*with_model=*/true);
    std::ostringstream log;
    TempDir outdir;
    const std::string prefix = outdir.str("metrics");
    CHECK(cmd_eval(ws.cfg, {"basic-only", "full"}, prefix, log) == kExitOk);
    std::ifstream csv(prefix + ".csv");
    std::stringstream content;
    content << csv.rdbuf();
    CHECK(content.str().find("basic-only,") != std::string::npos);
    CHECK(content.str().find("full,") != std::string::npos);
    auto doc = nlohmann::json::parse(std::ifstream(prefix + ".json"));
    REQUIRE(doc.size() == 2);
    CHECK(doc[0].at("variant") == "basic-only");
}

TEST_CASE("eval rejects unknown variants and missing models") {
    Workspace ws(/*with_model=*/false);
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_eval(ws.cfg, {"psychic"}, ws.dir.str("m"), log),
                    ConfigError);
    CHECK_THROWS_AS(cmd_eval(ws.cfg, {"full"}, ws.dir.str("m"), log), ConfigError);
}

TEST_CASE("config files reject unknown keys and invalid values") {
    TempDir dir;
    auto write = [&](const std::string& body) {
        std::ofstream(dir.str("cfg.json")) << body;
        return dir.str("cfg.json");
    };
    CHECK_THROWS_AS(Config::load(write(R"({"mystery_knob": 1})")), ConfigError);
    CHECK_THROWS_AS(Config::load(write(R"({"channels": "psychic"})")), ConfigError);
    CHECK_THROWS_AS(Config::load(write(R"({"timeout_minutes": -1})")), ConfigError);
    CHECK_THROWS_AS(Config::load(write(R"({"pairing_cosine_threshold": 1.5})")),
                    ConfigError);
    CHECK_THROWS_AS(Config::load(write(R"({"seed": "not a number"})")), ConfigError);
    CHECK_THROWS_AS(Config::load(write("{ not json")), ConfigError);

    auto cfg = Config::load(write(
        R"({"seed": 9, "channels": "basic", "unit_cap": 50, "timeout_minutes": 0})"));
    CHECK(cfg.seed == 9);
    CHECK(cfg.channels == "basic");
    CHECK(cfg.retrieval.unit_cap == 50);
    CHECK(cfg.timeout_minutes == 0.0);
}
