#pragma once

// Shared fixtures and small random generators for the test suites.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hierverb/dataset.hpp"
#include "hierverb/hierarchy.hpp"

namespace helpers {

using hierverb::Document;
using hierverb::Edge;
using hierverb::Hierarchy;
using hierverb::Rng;

// Depth-3 tree with numbered labels: 1 -> {3,4}, 2 -> {5,6}, 3 -> {7,8},
// 4 -> {9,10}, 5 -> {11,12}, 6 -> {13,14}. {1,3,7} forms a root-to-leaf path
// and 10 hangs under 4, not 3.
inline Hierarchy numbered_tree() {
    std::vector<Edge> edges;
    edges.emplace_back(std::nullopt, "1");
    edges.emplace_back(std::nullopt, "2");
    int next = 3;
    for (int parent = 1; parent <= 6; ++parent) {
        for (int c = 0; c < 2; ++c) {
            edges.emplace_back(std::to_string(parent), std::to_string(next++));
        }
    }
    return Hierarchy::from_edges(edges);
}

// Arbitrary random tree (possibly ragged), >= 2 nodes.
inline std::vector<Edge> random_tree_edges(Rng& rng, int max_nodes) {
    const int n = 2 + rng.below_int(max_nodes - 1);
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i) {
        const std::string name = "n" + std::to_string(i);
        if (i == 0 || rng.uniform01() < 0.2) {
            edges.emplace_back(std::nullopt, name);
        } else {
            edges.emplace_back("n" + std::to_string(rng.below_int(i)), name);
        }
    }
    return edges;
}

// Complete-layered random tree with 1..3 children per node and depth 2..4.
inline Hierarchy random_layered_tree(Rng& rng) {
    const int depth = 2 + rng.below_int(3);
    std::vector<Edge> edges;
    std::vector<std::string> frontier;
    const int roots = 1 + rng.below_int(3);
    for (int i = 0; i < roots; ++i) {
        const std::string name = "r" + std::to_string(i);
        edges.emplace_back(std::nullopt, name);
        frontier.push_back(name);
    }
    for (int d = 2; d <= depth; ++d) {
        std::vector<std::string> next;
        for (const std::string& parent : frontier) {
            const int kids = 1 + rng.below_int(3);
            for (int c = 0; c < kids; ++c) {
                const std::string name = parent + "_" + std::to_string(c);
                edges.emplace_back(parent, name);
                next.push_back(name);
            }
        }
        frontier = std::move(next);
    }
    return Hierarchy::from_edges(edges);
}

// Complete-layered tree bounded to max_labels nodes and max_depth layers.
inline Hierarchy random_small_tree(Rng& rng, int max_labels, int max_depth) {
    for (;;) {
        const int depth = 1 + rng.below_int(max_depth);
        std::vector<Edge> edges;
        std::vector<std::string> frontier;
        const int roots = 1 + rng.below_int(2);
        for (int i = 0; i < roots; ++i) {
            const std::string name = "r" + std::to_string(i);
            edges.emplace_back(std::nullopt, name);
            frontier.push_back(name);
        }
        for (int d = 2; d <= depth; ++d) {
            std::vector<std::string> next;
            for (const std::string& parent : frontier) {
                const int kids = 1 + rng.below_int(2);
                for (int c = 0; c < kids; ++c) {
                    const std::string name = parent + "_" + std::to_string(c);
                    edges.emplace_back(parent, name);
                    next.push_back(name);
                }
            }
            frontier = std::move(next);
        }
        if (static_cast<int>(edges.size()) <= max_labels) {
            return Hierarchy::from_edges(edges);
        }
    }
}

// Documents over randomly chosen leaf paths; single_path restricts every
// document to one path.
inline std::vector<Document> random_documents(Rng& rng, const Hierarchy& h, int count,
                                              bool single_path) {
    std::vector<Document> docs;
    const int paths = static_cast<int>(h.leaf_paths().size());
    for (int i = 0; i < count; ++i) {
        Document d;
        d.id = "doc" + std::to_string(i);
        const int n_paths = single_path ? 1 : 1 + rng.below_int(2);
        for (int p = 0; p < n_paths; ++p) {
            for (int id : h.path(rng.below_int(paths)).nodes) {
                d.labels.insert(id);
            }
        }
        std::string text;
        const int tokens = 2 + rng.below_int(5);
        for (int t = 0; t < tokens; ++t) {
            if (t > 0) {
                text += ' ';
            }
            text += "w" + std::to_string(rng.below_int(20));
        }
        d.text = text;
        hierverb::derive_paths(d, h);
        docs.push_back(std::move(d));
    }
    return docs;
}

}  // namespace helpers
