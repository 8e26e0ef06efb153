#pragma once

// K-shot support-set construction over leaf paths: iterative removal of
// paths rarer than K (and of the documents that carry them), then a greedy
// pass that samples documents per path, rarest-first, without replacement.

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierverb/common.hpp"
#include "hierverb/dataset.hpp"
#include "hierverb/hierarchy.hpp"

namespace hierverb {

enum class SampleOrder { Ascending, Descending };

inline const char* to_string(SampleOrder o) {
    return o == SampleOrder::Ascending ? "asc" : "desc";
}

inline SampleOrder sample_order_from_string(const std::string& s) {
    if (s == "asc") {
        return SampleOrder::Ascending;
    }
    if (s == "desc") {
        return SampleOrder::Descending;
    }
    fail("sample.order must be asc or desc, got '" + s + "'");
}

struct SupportSet {
    std::vector<Document> documents;  // in draw order
    std::map<int, int> counts;        // path id -> number of support docs carrying it
    int k = 0;
    std::uint64_t seed = 0;
    SampleOrder order = SampleOrder::Ascending;
};

// Repeatedly drops paths that occur in fewer than k documents, together with
// every document containing a dropped path, until the survivor set is stable.
// Returns the filtered documents and the surviving path ids.
inline std::pair<std::vector<Document>, std::vector<int>> filter_rare_paths(
    const std::vector<Document>& dataset, int k, const Hierarchy& h) {
    require(k >= 1, "filter_rare_paths: k must be >= 1");

    std::vector<bool> alive_path(h.leaf_paths().size(), true);
    std::vector<Document> docs = dataset;

    for (;;) {
        std::map<int, int> freq;
        for (const Document& d : docs) {
            for (int p : d.paths) {
                ++freq[p];
            }
        }
        std::vector<int> removed;
        for (std::size_t p = 0; p < alive_path.size(); ++p) {
            if (!alive_path[p]) {
                continue;
            }
            auto it = freq.find(static_cast<int>(p));
            if (it == freq.end() || it->second < k) {
                alive_path[p] = false;
                removed.push_back(static_cast<int>(p));
            }
        }
        if (removed.empty()) {
            break;
        }
        std::vector<Document> kept;
        kept.reserve(docs.size());
        for (Document& d : docs) {
            bool contains_removed = false;
            for (int p : d.paths) {
                if (!alive_path[static_cast<std::size_t>(p)]) {
                    contains_removed = true;
                    break;
                }
            }
            if (!contains_removed) {
                kept.push_back(std::move(d));
            }
        }
        docs = std::move(kept);
    }

    std::vector<int> surviving;
    for (std::size_t p = 0; p < alive_path.size(); ++p) {
        if (alive_path[p]) {
            surviving.push_back(static_cast<int>(p));
        }
    }
    require(!surviving.empty(),
            "filter_rare_paths: no path occurs in at least " + std::to_string(k) + " documents");
    return {std::move(docs), std::move(surviving)};
}

// Number of documents whose path set is exactly {p}, per path.
inline std::map<int, int> individual_frequency(const std::vector<Document>& dataset) {
    std::map<int, int> a;
    for (const Document& d : dataset) {
        if (d.paths.size() == 1) {
            ++a[d.paths.front()];
        }
    }
    return a;
}

inline SupportSet greedy_sample(const std::vector<Document>& filtered,
                                const std::vector<int>& paths, int k, std::uint64_t seed,
                                SampleOrder order = SampleOrder::Ascending) {
    require(k >= 1, "greedy_sample: k must be >= 1");

    const std::map<int, int> solo = individual_frequency(filtered);
    auto solo_count = [&](int p) {
        auto it = solo.find(p);
        return it == solo.end() ? 0 : it->second;
    };

    std::vector<int> path_order = paths;
    std::sort(path_order.begin(), path_order.end(), [&](int a, int b) {
        const int ca = solo_count(a);
        const int cb = solo_count(b);
        if (ca != cb) {
            return order == SampleOrder::Ascending ? ca < cb : ca > cb;
        }
        return a < b;
    });

    SupportSet out;
    out.k = k;
    out.seed = seed;
    out.order = order;
    for (int p : paths) {
        out.counts[p] = 0;
    }

    Rng rng(seed);
    std::vector<bool> used(filtered.size(), false);
    for (int p : path_order) {
        while (out.counts.at(p) < k) {
            std::vector<std::size_t> candidates;
            for (std::size_t i = 0; i < filtered.size(); ++i) {
                if (used[i]) {
                    continue;
                }
                const auto& dp = filtered[i].paths;
                if (std::find(dp.begin(), dp.end(), p) != dp.end()) {
                    candidates.push_back(i);
                }
            }
            require(!candidates.empty(),
                    "greedy_sample: candidate pool exhausted for path " + std::to_string(p) +
                        " before reaching " + std::to_string(k) + " shots (was the dataset filtered?)");
            const std::size_t pick = candidates[rng.below(candidates.size())];
            used[pick] = true;
            out.documents.push_back(filtered[pick]);
            for (int q : filtered[pick].paths) {
                auto it = out.counts.find(q);
                if (it != out.counts.end()) {
                    ++it->second;
                }
            }
        }
    }
    for (const auto& [p, c] : out.counts) {
        require(c >= k, "greedy_sample: path " + std::to_string(p) + " ended below k");
    }
    return out;
}

inline nlohmann::json support_manifest(const SupportSet& s) {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& [p, c] : s.counts) {
        counts.push_back(nlohmann::json::array({p, c}));
    }
    return nlohmann::json{
        {"K", s.k}, {"seed", s.seed}, {"order", to_string(s.order)}, {"path_counts", counts}};
}

inline void write_support(const SupportSet& s, const Hierarchy& h, const std::string& jsonl_path,
                          const std::string& manifest_path) {
    save_documents(s.documents, h, jsonl_path);
    std::ofstream out(manifest_path, std::ios::binary);
    require(out.good(), "support: cannot write '" + manifest_path + "'");
    out << support_manifest(s).dump(2) << '\n';
}

}  // namespace hierverb
