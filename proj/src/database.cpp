#include "tplscan/database.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tplscan/errors.hpp"
#include "tplscan/version.hpp"

namespace tplscan {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// InvertedIndex
// ---------------------------------------------------------------------------

void InvertedIndex::add_unit(const std::string& unit_id,
                             const std::set<StringLiteral>& strings,
                             const std::set<ExportedName>& exports) {
    UnitTotals& totals = totals_[unit_id];
    for (const auto& s : strings) {
        string_postings_[s.value].insert(unit_id);
        totals.string_count += 1;
        totals.weight_sum += s.weight;
    }
    for (const auto& e : exports) {
        export_postings_[e.name].insert(unit_id);
        totals.export_count += 1;
    }
}

const std::set<std::string>* InvertedIndex::lookup_string(
    const std::string& value) const {
    auto it = string_postings_.find(value);
    return it == string_postings_.end() ? nullptr : &it->second;
}

const std::set<std::string>* InvertedIndex::lookup_export(
    const std::string& name) const {
    auto it = export_postings_.find(name);
    return it == export_postings_.end() ? nullptr : &it->second;
}

std::size_t InvertedIndex::unit_string_count(const std::string& unit_id) const {
    auto it = totals_.find(unit_id);
    return it == totals_.end() ? 0 : it->second.string_count;
}

double InvertedIndex::unit_weight_sum(const std::string& unit_id) const {
    auto it = totals_.find(unit_id);
    return it == totals_.end() ? 0.0 : it->second.weight_sum;
}

std::size_t InvertedIndex::unit_export_count(const std::string& unit_id) const {
    auto it = totals_.find(unit_id);
    return it == totals_.end() ? 0 : it->second.export_count;
}

// ---------------------------------------------------------------------------
// VectorStore
// ---------------------------------------------------------------------------

void VectorStore::insert(FunctionVector vec) {
    if (dim_ == 0) {
        dim_ = static_cast<int>(vec.vector.size());
    } else if (static_cast<int>(vec.vector.size()) != dim_) {
        throw ShapeError("vector dimension mismatch in store");
    }
    vectors_.push_back(std::move(vec));
}

std::vector<VectorStore::Hit> VectorStore::topk(const Eigen::VectorXd& query,
                                                int k) const {
    if (k < 1) {
        throw DomainError("topk requires K >= 1");
    }
    std::vector<Hit> hits;
    hits.reserve(vectors_.size());
    for (const auto& v : vectors_) {
        hits.push_back({query.dot(v.vector), v.function_id, v.unit_id});
    }
    auto better = [](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.function_id != b.function_id) return a.function_id < b.function_id;
        return a.unit_id < b.unit_id;
    };
    const std::size_t keep = std::min<std::size_t>(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + keep, hits.end(), better);
    hits.resize(keep);
    return hits;
}

// ---------------------------------------------------------------------------
// TplDatabase
// ---------------------------------------------------------------------------

void TplDatabase::index_unit(const BinaryFeatureSet& fs,
                             std::vector<FunctionVector> vectors) {
    if (fs.library.empty() || fs.version.empty()) {
        throw ValidationError("unit '" + fs.binary_id +
                              "' has no library/version provenance");
    }
    try {
        Version::parse(fs.version);
    } catch (const ParseError& e) {
        throw ValidationError(std::string("unit '") + fs.binary_id + "': " +
                              e.what());
    }
    if (units_.count(fs.binary_id)) {
        throw ConflictError("unit id '" + fs.binary_id + "' already indexed");
    }
    UnitRecord rec;
    rec.ref = {fs.library, fs.version, fs.binary_id};
    rec.fcg = fs.fcg;
    index_.add_unit(fs.binary_id, fs.strings, fs.exports);
    for (auto& vec : vectors) {
        vec.unit_id = fs.binary_id;
        rec.vector_rows.push_back(store_.size());
        store_.insert(std::move(vec));
    }
    units_.emplace(fs.binary_id, std::move(rec));
}

std::set<UnitRef> TplDatabase::resolve(
    const std::set<std::string>* unit_ids) const {
    std::set<UnitRef> out;
    if (unit_ids) {
        for (const auto& id : *unit_ids) {
            out.insert(units_.at(id).ref);
        }
    }
    return out;
}

std::set<UnitRef> TplDatabase::lookup_basic_string(
    const std::string& value) const {
    return resolve(index_.lookup_string(value));
}

std::set<UnitRef> TplDatabase::lookup_basic_export(
    const std::string& name) const {
    return resolve(index_.lookup_export(name));
}

const TplDatabase::UnitRecord& TplDatabase::unit(
    const std::string& unit_id) const {
    auto it = units_.find(unit_id);
    if (it == units_.end()) {
        throw IntegrityError("unknown unit '" + unit_id + "'");
    }
    return it->second;
}

bool TplDatabase::has_unit(const std::string& unit_id) const {
    return units_.count(unit_id) > 0;
}

UnitRef TplDatabase::unit_ref(const std::string& unit_id) const {
    return unit(unit_id).ref;
}

std::vector<const FunctionVector*> TplDatabase::unit_vectors(
    const std::string& unit_id) const {
    std::vector<const FunctionVector*> out;
    for (std::size_t row : unit(unit_id).vector_rows) {
        out.push_back(&store_.vectors()[row]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IntegrityError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& data,
                std::map<std::string, std::uint64_t>& checksums,
                const std::string& name) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IntegrityError("cannot write " + path.string());
    }
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    checksums[name] = fnv1a64(data);
}

struct BinWriter {
    std::string buf;
    void u32(std::uint32_t v) { buf.append(reinterpret_cast<char*>(&v), 4); }
    void f64(double v) { buf.append(reinterpret_cast<char*>(&v), 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf.append(s);
    }
};

struct BinReader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit BinReader(const std::string& b) : buf(b) {}
    void need(std::size_t n) {
        if (pos + n > buf.size()) {
            throw IntegrityError("truncated binary payload");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string unit_file_name(std::size_t ordinal) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.json", ordinal);
    return name;
}

}  // namespace

void TplDatabase::persist(const std::string& dir) const {
    fs::create_directories(fs::path(dir) / "units");
    std::map<std::string, std::uint64_t> checksums;

    // Unit ordinals give the compact ids used by the binary payloads.
    std::vector<const UnitRecord*> ordered;
    std::map<std::string, std::uint32_t> ordinal;
    for (const auto& [id, rec] : units_) {
        ordinal[id] = static_cast<std::uint32_t>(ordered.size());
        ordered.push_back(&rec);
    }

    json meta;
    meta["format_version"] = 1;
    json libraries = json::object();
    json unit_list = json::array();
    for (const UnitRecord* rec : ordered) {
        libraries[rec->ref.library][rec->ref.version].push_back(rec->ref.unit);
        unit_list.push_back({{"unit", rec->ref.unit},
                             {"library", rec->ref.library},
                             {"version", rec->ref.version}});
    }
    meta["libraries"] = libraries;
    meta["units"] = unit_list;
    write_file(fs::path(dir) / "meta.json", meta.dump(2), checksums, "meta.json");

    BinWriter index;
    auto write_postings =
        [&](const std::map<std::string, std::set<std::string>>& postings) {
            index.u32(static_cast<std::uint32_t>(postings.size()));
            for (const auto& [feature, unit_ids] : postings) {
                index.str(feature);
                index.u32(static_cast<std::uint32_t>(unit_ids.size()));
                for (const auto& id : unit_ids) {
                    index.u32(ordinal.at(id));
                }
            }
        };
    write_postings(index_.string_postings());
    write_postings(index_.export_postings());
    write_file(fs::path(dir) / "index.bin", index.buf, checksums, "index.bin");

    BinWriter vectors;
    vectors.u32(static_cast<std::uint32_t>(store_.size()));
    vectors.u32(static_cast<std::uint32_t>(store_.dim()));
    for (const auto& vec : store_.vectors()) {
        vectors.u32(ordinal.at(vec.unit_id));
        vectors.str(vec.function_id);
    }
    for (const auto& vec : store_.vectors()) {
        for (int i = 0; i < vec.vector.size(); ++i) {
            vectors.f64(vec.vector[i]);
        }
    }
    write_file(fs::path(dir) / "vectors.bin", vectors.buf, checksums,
               "vectors.bin");

    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const UnitRecord* rec = ordered[i];
        json unit;
        unit["unit"] = rec->ref.unit;
        unit["fcg_nodes"] = json::array();
        for (const auto& node : rec->fcg.nodes) {
            unit["fcg_nodes"].push_back(node);
        }
        unit["fcg_edges"] = json::array();
        for (const auto& [a, b] : rec->fcg.edges) {
            unit["fcg_edges"].push_back({a, b});
        }
        unit["vector_rows"] = rec->vector_rows;
        const std::string name = "units/" + unit_file_name(i);
        write_file(fs::path(dir) / name, unit.dump(2), checksums, name);
    }

    json sums = json::object();
    for (const auto& [name, hash] : checksums) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(hash));
        sums[name] = hex;
    }
    std::ofstream out(fs::path(dir) / "checksums.json");
    out << sums.dump(2) << "\n";
}

TplDatabase TplDatabase::load(const std::string& dir) {
    json sums;
    try {
        std::istringstream in(read_file(fs::path(dir) / "checksums.json"));
        in >> sums;
    } catch (const json::parse_error& e) {
        throw IntegrityError("invalid checksums.json: " + std::string(e.what()));
    }

    std::map<std::string, std::string> contents;
    for (const auto& [name, expected] : sums.items()) {
        std::string data = read_file(fs::path(dir) / name);
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(data)));
        if (expected.get<std::string>() != hex) {
            throw IntegrityError("checksum mismatch for " + name +
                                 ": expected " + expected.get<std::string>() +
                                 ", got " + hex);
        }
        contents.emplace(name, std::move(data));
    }

    auto content = [&](const std::string& name) -> const std::string& {
        auto it = contents.find(name);
        if (it == contents.end()) {
            throw IntegrityError("missing database file " + name);
        }
        return it->second;
    };

    json meta = json::parse(content("meta.json"));
    if (meta.at("format_version") != 1) {
        throw IntegrityError("unsupported database format version");
    }

    TplDatabase db;
    std::vector<std::string> unit_ids;
    for (const auto& entry : meta.at("units")) {
        UnitRecord rec;
        rec.ref = {entry.at("library").get<std::string>(),
                   entry.at("version").get<std::string>(),
                   entry.at("unit").get<std::string>()};
        unit_ids.push_back(rec.ref.unit);
        db.units_.emplace(rec.ref.unit, std::move(rec));
    }
    auto unit_by_ordinal = [&](std::uint32_t i) -> const std::string& {
        if (i >= unit_ids.size()) {
            throw IntegrityError("unit ordinal out of range");
        }
        return unit_ids[i];
    };

    BinReader index(content("index.bin"));
    // Per-unit totals are rebuilt through add_unit below, feature by feature.
    auto read_postings = [&](bool is_string) {
        std::uint32_t features = index.u32();
        for (std::uint32_t i = 0; i < features; ++i) {
            std::string feature = index.str();
            std::uint32_t count = index.u32();
            for (std::uint32_t j = 0; j < count; ++j) {
                const std::string& unit_id = unit_by_ordinal(index.u32());
                if (is_string) {
                    db.index_.add_unit(
                        unit_id, {{feature, string_weight(feature)}}, {});
                } else {
                    db.index_.add_unit(unit_id, {}, {{feature}});
                }
            }
        }
    };
    read_postings(true);
    read_postings(false);

    BinReader vectors(content("vectors.bin"));
    const std::uint32_t n = vectors.u32();
    const std::uint32_t dim = vectors.u32();
    std::vector<FunctionVector> rows(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        rows[i].unit_id = unit_by_ordinal(vectors.u32());
        rows[i].function_id = vectors.str();
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        rows[i].vector.resize(dim);
        for (std::uint32_t c = 0; c < dim; ++c) {
            rows[i].vector[c] = vectors.f64();
        }
        db.store_.insert(std::move(rows[i]));
    }

    for (std::size_t i = 0; i < unit_ids.size(); ++i) {
        json unit = json::parse(content("units/" + unit_file_name(i)));
        UnitRecord& rec = db.units_.at(unit.at("unit").get<std::string>());
        for (const auto& node : unit.at("fcg_nodes")) {
            rec.fcg.nodes.insert(node.get<std::string>());
        }
        for (const auto& edge : unit.at("fcg_edges")) {
            rec.fcg.edges.insert(
                {edge[0].get<std::string>(), edge[1].get<std::string>()});
        }
        for (const auto& row : unit.at("vector_rows")) {
            std::size_t r = row.get<std::size_t>();
            if (r >= db.store_.size()) {
                throw IntegrityError("vector row out of range in unit payload");
            }
            rec.vector_rows.push_back(r);
        }
    }
    return db;
}

}  // namespace tplscan
