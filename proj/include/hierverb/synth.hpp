#pragma once

// Synthetic corpus generator: a complete-layered taxonomy with configurable
// branching, and documents whose text mixes indicator tokens for every label
// on the gold path with filler tokens. Label names are single tokens so a
// document's text can carry them verbatim.

#include <optional>
#include <string>
#include <vector>

#include "hierverb/common.hpp"
#include "hierverb/hierarchy.hpp"

namespace hierverb {

struct SyntheticSpec {
    std::vector<int> branching = {3, 4};  // children per node, per depth
    int docs_per_path = 5;
    int tokens_per_doc = 12;
    double signal = 1.0;  // probability a gold label's indicator token is emitted
    int noise_vocab = 20;
    std::uint64_t seed = 0;

    void validate() const {
        require(!branching.empty(), "synth: branching must have at least one depth");
        for (int b : branching) {
            require(b >= 1, "synth: branching factors must be >= 1");
        }
        require(docs_per_path >= 1, "synth: docs_per_path must be >= 1");
        require(tokens_per_doc >= 1, "synth: tokens_per_doc must be >= 1");
        require(signal >= 0.0 && signal <= 1.0, "synth: signal must be in [0,1]");
        require(noise_vocab >= 0, "synth: noise_vocab must be >= 0");
    }
};

struct RawDocument {
    std::string id;
    std::string text;
    std::vector<std::string> labels;
};

struct SyntheticCorpus {
    std::vector<Edge> edges;
    std::vector<RawDocument> documents;
};

inline SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SyntheticCorpus out;

    // Depth-first expansion; names chain parent name + child index.
    std::vector<std::vector<std::string>> paths;  // label names root-side first
    auto expand = [&](auto&& self, const std::optional<std::string>& parent,
                      std::vector<std::string>& chain, std::size_t depth) -> void {
        if (depth == spec.branching.size()) {
            paths.push_back(chain);
            return;
        }
        for (int i = 0; i < spec.branching[depth]; ++i) {
            std::string name =
                parent ? *parent + "x" + std::to_string(i) : "topic" + std::to_string(i);
            out.edges.emplace_back(parent, name);
            chain.push_back(name);
            self(self, name, chain, depth + 1);
            chain.pop_back();
        }
    };
    std::vector<std::string> chain;
    expand(expand, std::nullopt, chain, 0);

    int counter = 0;
    for (const auto& path : paths) {
        for (int i = 0; i < spec.docs_per_path; ++i) {
            RawDocument doc;
            doc.id = "d" + std::to_string(counter++);
            doc.labels = path;
            std::vector<std::string> tokens;
            for (const std::string& label : path) {
                if (rng.uniform01() < spec.signal) {
                    tokens.push_back(label);
                }
            }
            while (static_cast<int>(tokens.size()) < spec.tokens_per_doc && spec.noise_vocab > 0) {
                tokens.push_back("filler" + std::to_string(rng.below(static_cast<std::uint64_t>(
                                                spec.noise_vocab))));
            }
            rng.shuffle(tokens);
            std::string text;
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                if (t > 0) {
                    text += ' ';
                }
                text += tokens[t];
            }
            doc.text = std::move(text);
            out.documents.push_back(std::move(doc));
        }
    }
    return out;
}

inline std::string corpus_to_jsonl(const SyntheticCorpus& corpus) {
    std::string out;
    for (const RawDocument& d : corpus.documents) {
        nlohmann::json labels = nlohmann::json::array();
        for (const std::string& l : d.labels) {
            labels.push_back(l);
        }
        out += nlohmann::json{{"id", d.id}, {"text", d.text}, {"labels", labels}}.dump();
        out += '\n';
    }
    return out;
}

}  // namespace hierverb
