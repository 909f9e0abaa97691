#pragma once

// Reference implementations written from the definitions, without the
// library's code paths, for cross-checking.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

using nlohmann::json;

inline std::set<std::string> trigrams(const std::string& s) {
    std::string lower;
    for (unsigned char c : s) lower.push_back(static_cast<char>(std::tolower(c)));
    const std::string padded = "  " + lower + " ";
    std::set<std::string> out;
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.insert(padded.substr(i, 3));
    return out;
}

inline double jaccard(const std::string& a, const std::string& b) {
    const auto x = trigrams(a);
    const auto y = trigrams(b);
    std::vector<std::string> both;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(both));
    const double uni = static_cast<double>(x.size() + y.size() - both.size());
    return uni == 0 ? 0.0 : static_cast<double>(both.size()) / uni;
}

struct Weights {
    double conf, rel, sem, par;
};

struct OracleEdge {
    std::string parent;
    std::string child;
    std::string relation;
    std::string direction;
    double confidence;
    int depth;

    friend bool operator<(const OracleEdge& a, const OracleEdge& b) {
        return std::tie(a.depth, a.parent, a.child) < std::tie(b.depth, b.parent, b.child);
    }
    friend bool operator==(const OracleEdge& a, const OracleEdge& b) {
        return a.parent == b.parent && a.child == b.child && a.relation == b.relation && a.direction == b.direction &&
               a.confidence == b.confidence && a.depth == b.depth;
    }
};

/// Layered greedy expansion over the ground-truth link table. For every
/// frontier node the K-subset with the highest summed score is chosen by
/// exhaustive search; the layer's diversity state updates after each node.
inline std::vector<OracleEdge> expand(const json& truth, const std::vector<int>& branching, const Weights& w,
                                      double threshold) {
    const std::string seed = truth.at("seed");
    std::set<std::string> in_graph{seed};
    std::vector<std::string> frontier{seed};
    std::vector<OracleEdge> edges;
    for (std::size_t d = 0; d < branching.size(); ++d) {
        const std::size_t k = static_cast<std::size_t>(branching[d]);
        std::map<std::string, int> relation_counts;
        std::vector<std::string> layer_titles;
        std::set<int> layer_paragraphs;
        std::vector<std::string> next;
        for (const auto& parent : frontier) {
            struct Cand {
                std::string title, relation, direction;
                double conf, score;
                int paragraph;
            };
            std::vector<Cand> cands;
            std::set<std::string> seen;
            const auto links = truth.at("links").value(parent, json::array());
            for (const auto& l : links) {
                const std::string t = l.at("target");
                if (!l.at("entity").get<bool>() || l.at("relation").is_null()) continue;
                if (in_graph.count(t) || !seen.insert(t).second) continue;
                const double conf = l.at("confidence");
                if (conf < threshold) continue;
                const std::string rel = l.at("relation");
                double sim = 0;
                for (const auto& o : layer_titles) sim = std::max(sim, jaccard(t, o));
                const double score = w.conf * conf + w.rel / (1.0 + relation_counts[rel]) +
                                     w.sem * (layer_titles.empty() ? 1.0 : 1.0 - sim) +
                                     w.par * (layer_paragraphs.count(l.at("paragraph").get<int>()) ? 0.0 : 1.0);
                cands.push_back({t, rel, l.at("direction"), conf, score, l.at("paragraph")});
            }
            // Exhaustive best subset of size min(k, n).
            const std::size_t n = cands.size();
            const std::size_t take = std::min(k, n);
            std::vector<std::size_t> best;
            double best_sum = -1;
            for (unsigned mask = 0; mask < (1u << n); ++mask) {
                if (static_cast<std::size_t>(__builtin_popcount(mask)) != take) continue;
                std::vector<std::size_t> pick;
                double sum = 0;
                for (std::size_t i = 0; i < n; ++i)
                    if (mask & (1u << i)) pick.push_back(i), sum += cands[i].score;
                auto titles = [&](const std::vector<std::size_t>& p) {
                    std::vector<std::string> ts;
                    for (auto i : p) ts.push_back(cands[i].title);
                    std::sort(ts.begin(), ts.end());
                    return ts;
                };
                if (sum > best_sum + 1e-12 || (std::abs(sum - best_sum) <= 1e-12 && titles(pick) < titles(best))) {
                    best_sum = sum;
                    best = pick;
                }
            }
            std::sort(best.begin(), best.end(), [&](std::size_t a, std::size_t b) {
                if (cands[a].score != cands[b].score) return cands[a].score > cands[b].score;
                return cands[a].title < cands[b].title;
            });
            for (auto i : best) {
                const auto& c = cands[i];
                edges.push_back({parent, c.title, c.relation, c.direction, c.conf, static_cast<int>(d) + 1});
                in_graph.insert(c.title);
                next.push_back(c.title);
                relation_counts[c.relation]++;
                layer_titles.push_back(c.title);
                layer_paragraphs.insert(c.paragraph);
            }
        }
        frontier = next;
    }
    return edges;
}

constexpr int kInf = std::numeric_limits<int>::max() / 4;

/// All-pairs shortest path lengths (Floyd-Warshall) on an undirected graph.
inline std::vector<std::vector<int>> all_pairs(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> dist(n, std::vector<int>(n, kInf));
    for (int i = 0; i < n; ++i) dist[i][i] = 0;
    for (auto [a, b] : edges) {
        if (a == b) continue;
        dist[a][b] = dist[b][a] = 1;
    }
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (dist[i][k] + dist[k][j] < dist[i][j]) dist[i][j] = dist[i][k] + dist[k][j];
    return dist;
}

/// Component id per node via union-find.
inline std::vector<int> components(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (auto [a, b] : edges) parent[find(a)] = find(b);
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) out[i] = find(i);
    return out;
}

struct StructureOracle {
    int orphans = 0;
    int diameter = 0;
};

/// Main component = largest, ties to the one holding the lowest node index.
/// Orphans are nodes outside it; diameter is its longest shortest path.
inline StructureOracle structure(int n, const std::vector<std::pair<int, int>>& edges) {
    if (n == 0) return {};
    const auto comp = components(n, edges);
    std::map<int, int> size;
    for (int c : comp) size[c]++;
    int main = comp[0];
    for (int i = 0; i < n; ++i)
        if (size[comp[i]] > size[main]) main = comp[i];
    const auto dist = all_pairs(n, edges);
    StructureOracle out;
    for (int i = 0; i < n; ++i) {
        if (comp[i] != main) {
            ++out.orphans;
            continue;
        }
        for (int j = 0; j < n; ++j)
            if (comp[j] == main) out.diameter = std::max(out.diameter, dist[i][j]);
    }
    return out;
}

}  // namespace oracle
