#pragma once

// Labeled documents and their JSONL form. Loaded documents are checked for
// path consistency: the label set must be exactly the union of the complete
// root-to-leaf paths it induces.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierverb/common.hpp"
#include "hierverb/hierarchy.hpp"

namespace hierverb {

struct Document {
    std::string id;
    std::string text;
    std::set<int> labels;    // node ids
    std::vector<int> paths;  // complete path ids, ascending
};

inline void derive_paths(Document& doc, const Hierarchy& h) {
    auto [complete, invalid] = h.labels_to_paths(doc.labels);
    require(invalid.empty(),
            "document '" + doc.id + "': labels do not decompose into complete paths");
    require(!complete.empty(), "document '" + doc.id + "': no complete label path");
    doc.paths.assign(complete.begin(), complete.end());
}

inline Document document_from_json(const nlohmann::json& j, const Hierarchy& h) {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.text = j.at("text").get<std::string>();
    for (const auto& name : j.at("labels")) {
        doc.labels.insert(h.id_of(name.get<std::string>()));
    }
    derive_paths(doc, h);
    return doc;
}

inline nlohmann::json document_to_json(const Document& doc, const Hierarchy& h) {
    nlohmann::json names = nlohmann::json::array();
    for (int id : doc.labels) {  // std::set keeps ids ascending
        names.push_back(h.name_of(id));
    }
    return nlohmann::json{{"id", doc.id}, {"text", doc.text}, {"labels", names}};
}

inline std::vector<Document> load_documents(const std::string& path, const Hierarchy& h) {
    std::ifstream in(path);
    require(in.good(), "dataset: cannot open '" + path + "'");
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        try {
            docs.push_back(document_from_json(nlohmann::json::parse(line), h));
        } catch (const nlohmann::json::exception& e) {
            fail("dataset: bad JSON at " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return docs;
}

inline std::string documents_to_jsonl(const std::vector<Document>& docs, const Hierarchy& h) {
    std::string out;
    for (const Document& d : docs) {
        out += document_to_json(d, h).dump();
        out += '\n';
    }
    return out;
}

inline void save_documents(const std::vector<Document>& docs, const Hierarchy& h,
                           const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "dataset: cannot write '" + path + "'");
    out << documents_to_jsonl(docs, h);
}

}  // namespace hierverb
