#include "tplscan/features.hpp"

#include <algorithm>
#include <queue>

namespace tplscan {

double string_weight(const std::string& value) {
    double w = static_cast<double>(std::min<std::size_t>(value.size(), 50));
    if (value.find("://") != std::string::npos ||
        value.find('/') != std::string::npos ||
        value.find('\\') != std::string::npos) {
        w *= 2.0;
    }
    return w;
}

std::vector<int> compute_offspring(const std::vector<std::pair<int, int>>& edges,
                                   int block_count) {
    std::vector<std::vector<int>> succ(block_count);
    for (const auto& [src, dst] : edges) {
        succ[src].push_back(dst);
    }
    std::vector<int> result(block_count, 0);
    std::vector<char> visited(block_count);
    for (int start = 0; start < block_count; ++start) {
        std::fill(visited.begin(), visited.end(), 0);
        // BFS from the successors, so `start` itself only counts when a
        // cycle leads back to it.
        std::queue<int> frontier;
        for (int s : succ[start]) {
            if (!visited[s]) {
                visited[s] = 1;
                frontier.push(s);
            }
        }
        int count = 0;
        while (!frontier.empty()) {
            int node = frontier.front();
            frontier.pop();
            ++count;
            for (int next : succ[node]) {
                if (!visited[next]) {
                    visited[next] = 1;
                    frontier.push(next);
                }
            }
        }
        result[start] = count;
    }
    return result;
}

std::vector<const Acfg*> embeddable_functions(const BinaryFeatureSet& fs,
                                              int min_blocks) {
    std::vector<const Acfg*> out;
    for (const auto& [id, acfg] : fs.acfgs) {  // std::map: id-sorted order
        if (acfg.block_count() >= min_blocks) {
            out.push_back(&acfg);
        }
    }
    return out;
}

}  // namespace tplscan
