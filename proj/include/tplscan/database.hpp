#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tplscan/embedding.hpp"
#include "tplscan/features.hpp"

namespace tplscan {

struct UnitRef {
    std::string library;
    std::string version;
    std::string unit;

    auto operator<=>(const UnitRef&) const = default;
};

// Exact-match posting lists over basic features, plus per-unit totals used
// by the matching rules.
class InvertedIndex {
  public:
    void add_unit(const std::string& unit_id, const std::set<StringLiteral>& strings,
                  const std::set<ExportedName>& exports);

    const std::set<std::string>* lookup_string(const std::string& value) const;
    const std::set<std::string>* lookup_export(const std::string& name) const;

    std::size_t unit_string_count(const std::string& unit_id) const;
    double unit_weight_sum(const std::string& unit_id) const;
    std::size_t unit_export_count(const std::string& unit_id) const;

    const std::map<std::string, std::set<std::string>>& string_postings() const {
        return string_postings_;
    }
    const std::map<std::string, std::set<std::string>>& export_postings() const {
        return export_postings_;
    }

  private:
    struct UnitTotals {
        std::size_t string_count = 0;
        double weight_sum = 0.0;
        std::size_t export_count = 0;
    };
    std::map<std::string, std::set<std::string>> string_postings_;
    std::map<std::string, std::set<std::string>> export_postings_;
    std::map<std::string, UnitTotals> totals_;
};

// Exact maximal-inner-product store over unit-tagged function vectors.
class VectorStore {
  public:
    struct Hit {
        double score;
        std::string function_id;
        std::string unit_id;
    };

    void insert(FunctionVector vec);

    // Exact top-K by inner product; ties broken by ascending function id,
    // then unit id. Returns min(K, N) hits.
    std::vector<Hit> topk(const Eigen::VectorXd& query, int k) const;

    std::size_t size() const { return vectors_.size(); }
    int dim() const { return dim_; }
    const std::vector<FunctionVector>& vectors() const { return vectors_; }

  private:
    int dim_ = 0;
    std::vector<FunctionVector> vectors_;
};

// library -> version -> comparison unit -> features, with the inverted index
// and the vector store on top. Build phase is single-writer; a built
// database is immutable and safe for concurrent readers.
class TplDatabase {
  public:
    struct UnitRecord {
        UnitRef ref;
        Fcg fcg;
        std::vector<std::size_t> vector_rows;  // rows into the store
    };

    // Indexes one comparison unit: basic features into the inverted index,
    // embedded function vectors into the vector store, FCG retained for the
    // filter stage. Throws ConflictError on a duplicate unit id and
    // ValidationError when provenance is missing or the version is
    // unparseable.
    void index_unit(const BinaryFeatureSet& fs,
                    std::vector<FunctionVector> vectors);

    std::set<UnitRef> lookup_basic_string(const std::string& value) const;
    std::set<UnitRef> lookup_basic_export(const std::string& name) const;

    const InvertedIndex& index() const { return index_; }
    const VectorStore& store() const { return store_; }

    const UnitRecord& unit(const std::string& unit_id) const;
    bool has_unit(const std::string& unit_id) const;
    UnitRef unit_ref(const std::string& unit_id) const;
    std::vector<const FunctionVector*> unit_vectors(const std::string& unit_id) const;

    const std::map<std::string, UnitRecord>& units() const { return units_; }
    std::size_t unit_count() const { return units_.size(); }

    // Directory layout: meta.json, index.bin, vectors.bin, units/NNNN.json,
    // checksums.json. load() verifies checksums and throws IntegrityError on
    // a mismatch.
    void persist(const std::string& dir) const;
    static TplDatabase load(const std::string& dir);

  private:
    std::set<UnitRef> resolve(const std::set<std::string>* unit_ids) const;

    InvertedIndex index_;
    VectorStore store_;
    std::map<std::string, UnitRecord> units_;
};

}  // namespace tplscan
