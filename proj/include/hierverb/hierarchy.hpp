#pragma once

// Label taxonomy: a tree of named labels with per-depth layers, root-to-leaf
// paths, and the ancestor/descendant queries everything else builds on.
// Nodes get dense ids assigned by (depth, name) so builds are reproducible.

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierverb/common.hpp"

namespace hierverb {

struct LabelNode {
    int id = -1;
    std::string name;
    int parent = -1;  // -1 for depth-1 nodes
    int depth = 0;    // distance from the virtual root; depth-1 nodes hang off it
};

struct LabelPath {
    int id = -1;
    std::vector<int> nodes;  // root-side first, last entry is a leaf
};

using Edge = std::pair<std::optional<std::string>, std::string>;

class Hierarchy {
public:
    static Hierarchy from_edges(const std::vector<Edge>& edges);
    static Hierarchy load(const std::string& path);

    int size() const { return static_cast<int>(nodes_.size()); }
    int depth() const { return depth_; }
    bool complete_layered() const { return complete_layered_; }

    const std::vector<LabelNode>& nodes() const { return nodes_; }
    const LabelNode& node(int id) const {
        require(valid(id), "hierarchy: unknown node id " + std::to_string(id));
        return nodes_[static_cast<std::size_t>(id)];
    }
    bool valid(int id) const { return id >= 0 && id < size(); }

    const std::string& name_of(int id) const { return node(id).name; }
    int depth_of(int id) const { return node(id).depth; }
    int parent_of(int id) const { return node(id).parent; }
    bool is_leaf(int id) const { return children(id).empty(); }

    int id_of(const std::string& name) const {
        const int id = find(name);
        require(id >= 0, "hierarchy: unknown label name '" + name + "'");
        return id;
    }
    int find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? -1 : it->second;
    }

    const std::vector<int>& children(int id) const {
        require(valid(id), "hierarchy: unknown node id " + std::to_string(id));
        return children_[static_cast<std::size_t>(id)];
    }

    // layers()[d-1] lists the ids at depth d, ascending.
    const std::vector<std::vector<int>>& layers() const { return layers_; }
    int layer_size(int depth) const {
        require(depth >= 1 && depth <= depth_, "hierarchy: bad depth " + std::to_string(depth));
        return static_cast<int>(layers_[static_cast<std::size_t>(depth - 1)].size());
    }
    // Position of a node within its own layer.
    int local_index(int id) const { return node(id).id - layer_first_[static_cast<std::size_t>(node(id).depth - 1)]; }

    const std::vector<LabelPath>& leaf_paths() const { return leaf_paths_; }
    const LabelPath& path(int path_id) const {
        require(path_id >= 0 && path_id < static_cast<int>(leaf_paths_.size()),
                "hierarchy: unknown path id " + std::to_string(path_id));
        return leaf_paths_[static_cast<std::size_t>(path_id)];
    }
    // Path ending at the given leaf, or -1.
    int path_of_leaf(int leaf_id) const {
        require(valid(leaf_id), "hierarchy: unknown node id " + std::to_string(leaf_id));
        return leaf_to_path_[static_cast<std::size_t>(leaf_id)];
    }

    // Chain of ancestor ids, root-side first, excluding id itself.
    std::vector<int> ancestors(int id) const {
        std::vector<int> chain;
        for (int p = node(id).parent; p >= 0; p = nodes_[static_cast<std::size_t>(p)].parent) {
            chain.push_back(p);
        }
        std::reverse(chain.begin(), chain.end());
        return chain;
    }

    // Splits a label set into the root-to-leaf paths it fully covers and the
    // labels left over once those paths are taken out.
    std::pair<std::set<int>, std::set<int>> labels_to_paths(const std::set<int>& labels) const {
        for (int id : labels) {
            require(valid(id), "labels_to_paths: unknown node id " + std::to_string(id));
        }
        std::set<int> complete;
        std::set<int> covered;
        for (const LabelPath& lp : leaf_paths_) {
            bool all = true;
            for (int nid : lp.nodes) {
                if (labels.count(nid) == 0) {
                    all = false;
                    break;
                }
            }
            if (all) {
                complete.insert(lp.id);
                covered.insert(lp.nodes.begin(), lp.nodes.end());
            }
        }
        std::set<int> invalid;
        for (int id : labels) {
            if (covered.count(id) == 0) {
                invalid.insert(id);
            }
        }
        return {complete, invalid};
    }

private:
    std::vector<LabelNode> nodes_;
    std::vector<std::vector<int>> children_;
    std::vector<std::vector<int>> layers_;
    std::vector<int> layer_first_;  // first id of each layer (ids are contiguous per layer)
    std::vector<LabelPath> leaf_paths_;
    std::vector<int> leaf_to_path_;
    std::map<std::string, int> by_name_;
    int depth_ = 0;
    bool complete_layered_ = true;
};

inline Hierarchy Hierarchy::from_edges(const std::vector<Edge>& edges) {
    require(!edges.empty(), "hierarchy: no edges");

    // One entry per declared child; track its parent name (empty = root child).
    std::map<std::string, std::string> parent_name;
    for (const Edge& e : edges) {
        const std::string& child = e.second;
        require(!child.empty(), "hierarchy: empty label name");
        const std::string parent = e.first ? *e.first : std::string();
        require(!e.first || !e.first->empty(), "hierarchy: empty parent name");
        auto it = parent_name.find(child);
        if (it != parent_name.end()) {
            if (it->second == parent) {
                fail("hierarchy: duplicate name '" + child + "'");
            }
            fail("hierarchy: node '" + child + "' has two parents");
        }
        parent_name[child] = parent;
    }
    for (const auto& [child, parent] : parent_name) {
        if (!parent.empty() && parent_name.find(parent) == parent_name.end()) {
            fail("hierarchy: unknown parent name '" + parent + "'");
        }
    }

    // Depth by walking up the parent chain; a chain longer than the node
    // count means the edges loop back on themselves.
    const int n = static_cast<int>(parent_name.size());
    std::map<std::string, int> depth_by_name;
    for (const auto& [child, parent] : parent_name) {
        int d = 1;
        std::string cur = parent;
        while (!cur.empty()) {
            ++d;
            require(d <= n, "hierarchy: cycle detected at '" + child + "'");
            cur = parent_name.at(cur);
        }
        depth_by_name[child] = d;
    }

    // Dense ids sorted by (depth, name).
    std::vector<std::pair<int, std::string>> order;
    order.reserve(parent_name.size());
    for (const auto& [name, d] : depth_by_name) {
        order.emplace_back(d, name);
    }
    std::sort(order.begin(), order.end());

    Hierarchy h;
    h.nodes_.resize(order.size());
    for (int id = 0; id < n; ++id) {
        LabelNode& nd = h.nodes_[static_cast<std::size_t>(id)];
        nd.id = id;
        nd.depth = order[static_cast<std::size_t>(id)].first;
        nd.name = order[static_cast<std::size_t>(id)].second;
        h.by_name_[nd.name] = id;
        h.depth_ = std::max(h.depth_, nd.depth);
    }
    h.children_.assign(order.size(), {});
    for (LabelNode& nd : h.nodes_) {
        const std::string& pname = parent_name.at(nd.name);
        if (!pname.empty()) {
            nd.parent = h.by_name_.at(pname);
            h.children_[static_cast<std::size_t>(nd.parent)].push_back(nd.id);
        }
    }

    h.layers_.assign(static_cast<std::size_t>(h.depth_), {});
    h.layer_first_.assign(static_cast<std::size_t>(h.depth_), 0);
    for (const LabelNode& nd : h.nodes_) {
        auto& layer = h.layers_[static_cast<std::size_t>(nd.depth - 1)];
        if (layer.empty()) {
            h.layer_first_[static_cast<std::size_t>(nd.depth - 1)] = nd.id;
        }
        layer.push_back(nd.id);
    }
    require(!h.layers_.front().empty(), "hierarchy: no depth-1 nodes");

    // Root-to-leaf paths by depth-first walk, ids ascending at every level.
    h.leaf_to_path_.assign(order.size(), -1);
    std::vector<int> stack;
    auto dfs = [&](auto&& self, int id) -> void {
        stack.push_back(id);
        if (h.children_[static_cast<std::size_t>(id)].empty()) {
            LabelPath lp;
            lp.id = static_cast<int>(h.leaf_paths_.size());
            lp.nodes = stack;
            h.leaf_to_path_[static_cast<std::size_t>(id)] = lp.id;
            if (h.nodes_[static_cast<std::size_t>(id)].depth != h.depth_) {
                h.complete_layered_ = false;
            }
            h.leaf_paths_.push_back(std::move(lp));
        } else {
            for (int c : h.children_[static_cast<std::size_t>(id)]) {
                self(self, c);
            }
        }
        stack.pop_back();
    };
    for (int root : h.layers_.front()) {
        dfs(dfs, root);
    }
    return h;
}

// Accepts either a JSON object {"edges": [[parent-or-null, child], ...]} or
// tab-separated "parent<TAB>child" lines with the literal ROOT as null parent.
inline Hierarchy Hierarchy::load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "hierarchy: cannot open '" + path + "'");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<Edge> edges;
    const auto first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '{') {
        nlohmann::json j = nlohmann::json::parse(content);
        require(j.contains("edges") && j["edges"].is_array(), "hierarchy: missing 'edges' array");
        for (const auto& e : j["edges"]) {
            require(e.is_array() && e.size() == 2, "hierarchy: edge must be [parent, child]");
            std::optional<std::string> parent;
            if (!e[0].is_null()) {
                parent = e[0].get<std::string>();
            }
            edges.emplace_back(parent, e[1].get<std::string>());
        }
    } else {
        std::istringstream lines(content);
        std::string line;
        while (std::getline(lines, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty()) {
                continue;
            }
            const auto tab = line.find('\t');
            require(tab != std::string::npos, "hierarchy: expected parent<TAB>child in '" + line + "'");
            std::string parent = line.substr(0, tab);
            std::string child = line.substr(tab + 1);
            std::optional<std::string> p;
            if (parent != "ROOT") {
                p = parent;
            }
            edges.emplace_back(p, child);
        }
    }
    return from_edges(edges);
}

inline nlohmann::json edges_to_json(const std::vector<Edge>& edges) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Edge& e : edges) {
        nlohmann::json pair = nlohmann::json::array();
        if (e.first) {
            pair.push_back(*e.first);
        } else {
            pair.push_back(nullptr);
        }
        pair.push_back(e.second);
        arr.push_back(pair);
    }
    return nlohmann::json{{"edges", arr}};
}

}  // namespace hierverb
