#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "tplscan/database.hpp"
#include "tplscan/errors.hpp"

#include "oracles.hpp"

using namespace tplscan;

namespace {

Eigen::VectorXd unit_vec(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
    return v / v.norm();
}

BinaryFeatureSet make_unit(const std::string& lib, const std::string& ver,
                           const std::string& unit_id,
                           std::vector<std::string> strings = {},
                           std::vector<std::string> exports = {}) {
    BinaryFeatureSet fs;
    fs.binary_id = unit_id;
    fs.library = lib;
    fs.version = ver;
    for (auto& s : strings) fs.strings.insert({s, string_weight(s)});
    for (auto& e : exports) fs.exports.insert({e});
    return fs;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("tplscan_db_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace

TEST_CASE("topk matches an exhaustive scan with identical tie-breaking") {
    std::mt19937_64 rng(31);
    VectorStore store;
    const int dim = 8;
    std::vector<FunctionVector> rows;
    for (int i = 0; i < 400; ++i) {
        FunctionVector fv;
        fv.function_id = "f" + std::to_string(i);
        fv.unit_id = "u" + std::to_string(i % 7);
        fv.vector = unit_vec(rng, dim);
        rows.push_back(fv);
        store.insert(fv);
    }
    // Exact duplicates force score ties.
    for (int i = 0; i < 10; ++i) {
        FunctionVector dup = rows[i];
        dup.function_id = "dup" + std::to_string(i);
        rows.push_back(dup);
        store.insert(dup);
    }
    for (int q = 0; q < 20; ++q) {
        Eigen::VectorXd query = unit_vec(rng, dim);
        for (int k : {1, 5, 100, 1000}) {
            auto got = store.topk(query, k);
            auto want = oracles::topk_by_scan(rows, query, k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CAPTURE(q);
                CAPTURE(k);
                CAPTURE(i);
                CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
                CHECK(got[i].function_id == want[i].function_id);
                CHECK(got[i].unit_id == want[i].unit_id);
            }
        }
    }
}

TEST_CASE("topk edge cases") {
    VectorStore store;
    Eigen::VectorXd q(3);
    q << 1, 0, 0;
    CHECK(store.topk(q, 5).empty());  // empty store
    CHECK_THROWS_AS(store.topk(q, 0), DomainError);
    FunctionVector fv;
    fv.function_id = "f";
    fv.unit_id = "u";
    fv.vector = q;
    store.insert(fv);
    CHECK(store.topk(q, 10).size() == 1);  // K capped at N
    FunctionVector bad = fv;
    bad.vector = Eigen::VectorXd::Ones(5);
    CHECK_THROWS_AS(store.insert(bad), ShapeError);
}

TEST_CASE("inverted index is sound and complete over its inputs") {
    InvertedIndex index;
    index.add_unit("u1", {{"alpha", 5.0}, {"beta", 4.0}}, {{"exp_a"}});
    index.add_unit("u2", {{"beta", 4.0}, {"gamma", 5.0}}, {{"exp_a"}, {"exp_b"}});

    REQUIRE(index.lookup_string("beta") != nullptr);
    CHECK(*index.lookup_string("beta") == std::set<std::string>{"u1", "u2"});
    REQUIRE(index.lookup_string("alpha") != nullptr);
    CHECK(*index.lookup_string("alpha") == std::set<std::string>{"u1"});
    CHECK(index.lookup_string("delta") == nullptr);
    CHECK(*index.lookup_export("exp_b") == std::set<std::string>{"u2"});

    // Lookups are exact and case-sensitive.
    CHECK(index.lookup_string("Beta") == nullptr);
    CHECK(index.lookup_export("EXP_A") == nullptr);

    CHECK(index.unit_string_count("u1") == 2);
    CHECK(index.unit_weight_sum("u1") == doctest::Approx(9.0));
    CHECK(index.unit_export_count("u2") == 2);
    CHECK(index.unit_string_count("absent") == 0);
}

TEST_CASE("indexing requires provenance and a parseable version") {
    TplDatabase db;
    SUBCASE("missing library") {
        auto fs = make_unit("", "1.0.0", "u1");
        CHECK_THROWS_AS(db.index_unit(fs, {}), ValidationError);
    }
    SUBCASE("missing version") {
        auto fs = make_unit("zlib", "", "u1");
        CHECK_THROWS_AS(db.index_unit(fs, {}), ValidationError);
    }
    SUBCASE("unparseable version") {
        auto fs = make_unit("zlib", "latest", "u1");
        CHECK_THROWS_AS(db.index_unit(fs, {}), ValidationError);
    }
}

TEST_CASE("indexing the same unit id twice is a conflict") {
    TplDatabase db;
    db.index_unit(make_unit("zlib", "1.2.11", "u1"), {});
    CHECK_THROWS_AS(db.index_unit(make_unit("zlib", "1.2.12", "u1"), {}),
                    ConflictError);
}

TEST_CASE("database lookups resolve to unit references") {
    TplDatabase db;
    db.index_unit(make_unit("zlib", "1.2.11", "u1", {"inflate error"}), {});
    db.index_unit(make_unit("libpng", "1.6.0", "u2", {"inflate error"},
                            {"png_read_info"}),
                  {});
    auto hits = db.lookup_basic_string("inflate error");
    CHECK(hits == std::set<UnitRef>{{"libpng", "1.6.0", "u2"},
                                    {"zlib", "1.2.11", "u1"}});
    CHECK(db.lookup_basic_export("png_read_info") ==
          std::set<UnitRef>{{"libpng", "1.6.0", "u2"}});
    CHECK(db.lookup_basic_string("never seen").empty());
    CHECK(db.unit_ref("u1").library == "zlib");
    CHECK(db.has_unit("u2"));
    CHECK(!db.has_unit("u3"));
    CHECK_THROWS_AS(db.unit("u3"), IntegrityError);
}

TEST_CASE("vectors indexed with a unit are tagged and retrievable") {
    std::mt19937_64 rng(32);
    TplDatabase db;
    std::vector<FunctionVector> vecs;
    for (int i = 0; i < 3; ++i) {
        FunctionVector fv;
        fv.function_id = "fn" + std::to_string(i);
        fv.vector = unit_vec(rng, 4);
        vecs.push_back(fv);
    }
    db.index_unit(make_unit("zlib", "1.2.11", "u1"), vecs);
    auto ptrs = db.unit_vectors("u1");
    REQUIRE(ptrs.size() == 3);
    for (const auto* p : ptrs) {
        CHECK(p->unit_id == "u1");
    }
    CHECK(db.store().size() == 3);
}

TEST_CASE("persist and load round-trip the database") {
    std::mt19937_64 rng(33);
    TplDatabase db;
    for (int u = 0; u < 5; ++u) {
        auto fs = make_unit("lib" + std::to_string(u % 2), "1." + std::to_string(u) + ".0",
                            "unit" + std::to_string(u),
                            {"shared string", "unique " + std::to_string(u)},
                            {"export_" + std::to_string(u)});
        fs.fcg.nodes = {"a", "b", "c"};
        fs.fcg.edges = {{"a", "b"}, {"b", "c"}};
        std::vector<FunctionVector> vecs;
        for (int i = 0; i < 4; ++i) {
            FunctionVector fv;
            fv.function_id = "fn" + std::to_string(i);
            fv.vector = unit_vec(rng, 6);
            vecs.push_back(fv);
        }
        db.index_unit(fs, vecs);
    }

    TempDir tmp;
    db.persist(tmp.path.string());
    auto loaded = TplDatabase::load(tmp.path.string());

    CHECK(loaded.unit_count() == db.unit_count());
    for (const auto& [id, rec] : db.units()) {
        REQUIRE(loaded.has_unit(id));
        CHECK(loaded.unit(id).ref == rec.ref);
        CHECK(loaded.unit(id).fcg.nodes == rec.fcg.nodes);
        CHECK(loaded.unit(id).fcg.edges == rec.fcg.edges);
        CHECK(loaded.unit(id).vector_rows == rec.vector_rows);
    }
    CHECK(loaded.lookup_basic_string("shared string") ==
          db.lookup_basic_string("shared string"));
    CHECK(loaded.lookup_basic_export("export_3") ==
          db.lookup_basic_export("export_3"));
    CHECK(loaded.index().unit_weight_sum("unit0") ==
          doctest::Approx(db.index().unit_weight_sum("unit0")));

    // Probe suite: top-k answers are identical after the round-trip.
    for (int q = 0; q < 10; ++q) {
        Eigen::VectorXd query = unit_vec(rng, 6);
        auto a = db.store().topk(query, 7);
        auto b = loaded.store().topk(query, 7);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].function_id == b[i].function_id);
            CHECK(a[i].unit_id == b[i].unit_id);
            CHECK(a[i].score == b[i].score);  // bit-exact doubles
        }
    }
}

TEST_CASE("corrupted database files fail the checksum check") {
    std::mt19937_64 rng(34);
    TplDatabase db;
    std::vector<FunctionVector> vecs(1);
    vecs[0].function_id = "fn";
    vecs[0].vector = unit_vec(rng, 4);
    db.index_unit(make_unit("zlib", "1.2.11", "u1", {"some string"}), vecs);

    SUBCASE("flipped byte") {
        TempDir tmp;
        db.persist(tmp.path.string());
        auto victim = tmp.path / "vectors.bin";
        std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(10);
        f.put('\xff');
        f.close();
        CHECK_THROWS_WITH_AS(TplDatabase::load(tmp.path.string()),
                             doctest::Contains("checksum mismatch"),
                             IntegrityError);
    }
    SUBCASE("truncated file") {
        TempDir tmp;
        db.persist(tmp.path.string());
        auto victim = tmp.path / "index.bin";
        auto size = std::filesystem::file_size(victim);
        std::filesystem::resize_file(victim, size / 2);
        CHECK_THROWS_AS(TplDatabase::load(tmp.path.string()), IntegrityError);
    }
    SUBCASE("missing file") {
        TempDir tmp;
        db.persist(tmp.path.string());
        std::filesystem::remove(tmp.path / "meta.json");
        CHECK_THROWS_AS(TplDatabase::load(tmp.path.string()), IntegrityError);
    }
}
