// Independent reference implementations used to freeze expected values.
// These deliberately avoid the code paths they check: plain loops instead of
// Eigen, Floyd-Warshall closures instead of BFS contraction.
#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tplscan/detection.hpp"
#include "tplscan/embedding.hpp"
#include "tplscan/features.hpp"

namespace oracles {

// Transitive closure by Floyd-Warshall; reach[i][j] means a path of length
// >= 1 from i to j.
inline std::vector<std::vector<bool>> closure(
    const std::vector<std::pair<int, int>>& edges, int n) {
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (const auto& [s, d] : edges) {
        reach[s][d] = true;
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            if (!reach[i][k]) continue;
            for (int j = 0; j < n; ++j) {
                if (reach[k][j]) reach[i][j] = true;
            }
        }
    }
    return reach;
}

inline std::vector<int> offspring_by_closure(
    const std::vector<std::pair<int, int>>& edges, int n) {
    auto reach = closure(edges, n);
    std::vector<int> out(n, 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (reach[i][j]) ++out[i];
        }
    }
    return out;
}

// Mini-FCG edges by the definition: (a, b) with a != b, both anchors, and a
// path a -> b whose interior nodes are all non-anchors. Built from the
// closure of the non-anchor subgraph.
inline std::set<std::pair<std::string, std::string>> mini_fcg_by_closure(
    const tplscan::Fcg& fcg, const std::set<std::string>& anchors) {
    std::vector<std::string> nodes(fcg.nodes.begin(), fcg.nodes.end());
    std::map<std::string, int> idx;
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
        idx[nodes[i]] = i;
    }
    const int n = static_cast<int>(nodes.size());
    std::vector<std::vector<bool>> edge(n, std::vector<bool>(n, false));
    for (const auto& [a, b] : fcg.edges) {
        edge[idx.at(a)][idx.at(b)] = true;
    }
    // Closure restricted to paths through non-anchor interiors.
    std::vector<std::pair<int, int>> interior_edges;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (edge[i][j] && !anchors.count(nodes[i]) && !anchors.count(nodes[j])) {
                interior_edges.push_back({i, j});
            }
        }
    }
    auto interior_reach = closure(interior_edges, n);

    std::set<std::pair<std::string, std::string>> out;
    for (const auto& a : anchors) {
        for (const auto& b : anchors) {
            if (a == b) continue;
            const int ia = idx.at(a);
            const int ib = idx.at(b);
            bool reachable = edge[ia][ib];
            for (int u = 0; u < n && !reachable; ++u) {
                if (!edge[ia][u] || anchors.count(nodes[u])) continue;
                for (int v = 0; v < n && !reachable; ++v) {
                    if (!edge[v][ib] || anchors.count(nodes[v])) continue;
                    if (u == v || interior_reach[u][v]) reachable = true;
                }
            }
            if (reachable) out.insert({a, b});
        }
    }
    return out;
}

// Exhaustive top-k scan with the same tie-breaking contract.
inline std::vector<tplscan::VectorStore::Hit> topk_by_scan(
    const std::vector<tplscan::FunctionVector>& rows,
    const Eigen::VectorXd& query, int k) {
    std::vector<tplscan::VectorStore::Hit> hits;
    for (const auto& row : rows) {
        double score = 0.0;
        for (int i = 0; i < row.vector.size(); ++i) {
            score += query[i] * row.vector[i];
        }
        hits.push_back({score, row.function_id, row.unit_id});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.function_id != b.function_id) return a.function_id < b.function_id;
        return a.unit_id < b.unit_id;
    });
    if (static_cast<int>(hits.size()) > k) {
        hits.resize(k);
    }
    return hits;
}

// Straight-line reimplementation of the embedding forward pass with plain
// double arrays.
inline std::vector<double> embed_by_loops(const tplscan::Acfg& acfg,
                                          const tplscan::EmbeddingModel& m) {
    const int n = acfg.block_count();
    const int p = m.embed_dim;
    const int d = m.input_dim;
    std::vector<std::set<int>> nbrs(n);
    for (const auto& [s, t] : acfg.edges) {
        if (s != t) {
            nbrs[s].insert(t);
            nbrs[t].insert(s);
        }
    }
    std::vector<std::vector<double>> mu(n, std::vector<double>(p, 0.0));
    for (int t = 0; t < m.iterations; ++t) {
        std::vector<std::vector<double>> next(n, std::vector<double>(p, 0.0));
        for (int v = 0; v < n; ++v) {
            std::vector<double> sum(p, 0.0);
            for (int u : nbrs[v]) {
                for (int i = 0; i < p; ++i) sum[i] += mu[u][i];
            }
            std::vector<double> inner(p, 0.0);
            for (int i = 0; i < p; ++i) {
                for (int j = 0; j < p; ++j) inner[i] += m.mlp_inner(i, j) * sum[j];
                if (inner[i] < 0) inner[i] = 0;
            }
            for (int i = 0; i < p; ++i) {
                double acc = 0.0;
                for (int j = 0; j < d; ++j) {
                    // Mirrors the production input compression of raw counts.
                    acc += m.w_input(i, j) * std::log1p(acfg.blocks[v][j]);
                }
                for (int j = 0; j < p; ++j) acc += m.mlp_outer(i, j) * inner[j];
                next[v][i] = std::tanh(acc);
            }
        }
        mu = next;
    }
    std::vector<double> graph(p, 0.0);
    for (int v = 0; v < n; ++v) {
        for (int i = 0; i < p; ++i) graph[i] += mu[v][i];
    }
    std::vector<double> out(p, 0.0);
    double norm2 = 0.0;
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) out[i] += m.w_output(i, j) * graph[j];
        norm2 += out[i] * out[i];
    }
    const double norm = std::sqrt(norm2);
    for (int i = 0; i < p; ++i) out[i] /= norm;
    return out;
}

}  // namespace oracles
