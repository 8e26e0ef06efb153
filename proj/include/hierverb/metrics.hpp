#pragma once

// Evaluation: multi-label micro/macro F1, the ancestor-constrained variant
// where a hit only counts if its whole ancestor chain is also correctly
// predicted, and the path-level scores where whole root-to-leaf paths are the
// classification unit and stray labels shrink the score through a sigmoid
// penalty factor.

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierverb/common.hpp"
#include "hierverb/hierarchy.hpp"

namespace hierverb {

struct PredictionRecord {
    std::string id;
    std::set<int> gold;  // path-consistent
    std::set<int> pred;  // may be anything the decoder produced
};

struct LayerScore {
    int depth = 0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
};

struct EvalReport {
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    double cmicro_f1 = 0.0;
    double cmacro_f1 = 0.0;
    double pmicro_f1 = 0.0;
    double pmacro_f1 = 0.0;
    double raw_pmicro_f1 = 0.0;
    double raw_pmacro_f1 = 0.0;
    double gamma = 1.0;
    long long count_gold = 0;
    long long count_invalid = 0;
    long long label_tp = 0, label_fp = 0, label_fn = 0;
    long long cons_tp = 0, cons_fp = 0, cons_fn = 0;
    long long path_tp = 0, path_fp = 0, path_fn = 0;
    std::vector<LayerScore> per_layer;
};

namespace detail {

struct Counts {
    long long tp = 0, fp = 0, fn = 0;
};

inline double f1(const Counts& c) {
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    return denom == 0.0 ? 0.0 : 2.0 * c.tp / denom;
}

// Macro averages over the keys that actually occur in gold or predictions;
// per-key 0/0 counts as 0.
inline double macro_f1(const std::map<int, Counts>& per_key) {
    if (per_key.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& [key, c] : per_key) {
        s += f1(c);
    }
    return s / static_cast<double>(per_key.size());
}

inline Counts micro(const std::map<int, Counts>& per_key) {
    Counts total;
    for (const auto& [key, c] : per_key) {
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn += c.fn;
    }
    return total;
}

}  // namespace detail

inline std::tuple<double, double, std::vector<LayerScore>> micro_macro_f1(
    const std::vector<PredictionRecord>& records, const Hierarchy& h) {
    require(!records.empty(), "metrics: empty record set");
    std::map<int, detail::Counts> per_label;
    for (const PredictionRecord& r : records) {
        for (int id : r.pred) {
            require(h.valid(id), "metrics: unknown label id");
            if (r.gold.count(id)) {
                ++per_label[id].tp;
            } else {
                ++per_label[id].fp;
            }
        }
        for (int id : r.gold) {
            require(h.valid(id), "metrics: unknown label id");
            if (!r.pred.count(id)) {
                ++per_label[id].fn;
            }
        }
    }

    std::vector<LayerScore> layers;
    for (int d = 1; d <= h.depth(); ++d) {
        std::map<int, detail::Counts> layer_counts;
        for (const auto& [id, c] : per_label) {
            if (h.depth_of(id) == d) {
                layer_counts[id] = c;
            }
        }
        LayerScore ls;
        ls.depth = d;
        ls.micro_f1 = detail::f1(detail::micro(layer_counts));
        ls.macro_f1 = detail::macro_f1(layer_counts);
        layers.push_back(ls);
    }
    return {detail::f1(detail::micro(per_label)), detail::macro_f1(per_label), layers};
}

// A predicted label is a valid hit only when it is gold AND every ancestor is
// both predicted and gold; a demoted hit stays in the prediction (false
// positive) and its gold copy goes unmatched (false negative).
inline std::pair<double, double> constrained_f1(const std::vector<PredictionRecord>& records,
                                                const Hierarchy& h) {
    require(!records.empty(), "metrics: empty record set");
    std::map<int, detail::Counts> per_label;
    for (const PredictionRecord& r : records) {
        auto valid_hit = [&](int id) {
            if (!r.pred.count(id) || !r.gold.count(id)) {
                return false;
            }
            for (int a : h.ancestors(id)) {
                if (!r.pred.count(a) || !r.gold.count(a)) {
                    return false;
                }
            }
            return true;
        };
        for (int id : r.pred) {
            require(h.valid(id), "metrics: unknown label id");
            if (valid_hit(id)) {
                ++per_label[id].tp;
            } else {
                ++per_label[id].fp;
            }
        }
        for (int id : r.gold) {
            if (!(r.pred.count(id) && valid_hit(id))) {
                ++per_label[id].fn;
            }
        }
    }
    return {detail::f1(detail::micro(per_label)), detail::macro_f1(per_label)};
}

// gamma = 1 - 2*(sigmoid(a) - 0.5) with a = invalid/gold; 1 when nothing to
// penalize against.
inline double gamma_penalty(long long count_invalid, long long count_gold) {
    if (count_gold == 0) {
        return 1.0;
    }
    const double a = static_cast<double>(count_invalid) / static_cast<double>(count_gold);
    return 1.0 - 2.0 * (sigmoid(a) - 0.5);
}

struct PathMetricResult {
    double pmicro_f1 = 0.0;
    double pmacro_f1 = 0.0;
    double raw_pmicro_f1 = 0.0;
    double raw_pmacro_f1 = 0.0;
    double gamma = 1.0;
    long long count_gold = 0;
    long long count_invalid = 0;
    long long tp = 0, fp = 0, fn = 0;
};

inline PathMetricResult path_metric(const std::vector<PredictionRecord>& records,
                                    const Hierarchy& h) {
    require(!records.empty(), "metrics: empty record set");
    std::map<int, detail::Counts> per_path;
    PathMetricResult out;
    for (const PredictionRecord& r : records) {
        auto [gold_paths, gold_invalid] = h.labels_to_paths(r.gold);
        require(gold_invalid.empty(), "path_metric: gold labels of '" + r.id + "' are not path-consistent");
        auto [pred_paths, pred_invalid] = h.labels_to_paths(r.pred);
        out.count_gold += static_cast<long long>(r.gold.size());
        out.count_invalid += static_cast<long long>(pred_invalid.size());
        for (int p : pred_paths) {
            if (gold_paths.count(p)) {
                ++per_path[p].tp;
            } else {
                ++per_path[p].fp;
            }
        }
        for (int p : gold_paths) {
            if (!pred_paths.count(p)) {
                ++per_path[p].fn;
            }
        }
    }
    const detail::Counts total = detail::micro(per_path);
    out.tp = total.tp;
    out.fp = total.fp;
    out.fn = total.fn;
    out.raw_pmicro_f1 = detail::f1(total);
    out.raw_pmacro_f1 = detail::macro_f1(per_path);
    out.gamma = gamma_penalty(out.count_invalid, out.count_gold);
    out.pmicro_f1 = out.gamma * out.raw_pmicro_f1;
    out.pmacro_f1 = out.gamma * out.raw_pmacro_f1;
    return out;
}

inline EvalReport evaluate(const std::vector<PredictionRecord>& records, const Hierarchy& h) {
    EvalReport rep;
    auto [micro, macro, layers] = micro_macro_f1(records, h);
    rep.micro_f1 = micro;
    rep.macro_f1 = macro;
    rep.per_layer = std::move(layers);
    std::tie(rep.cmicro_f1, rep.cmacro_f1) = constrained_f1(records, h);

    // Re-derive the plain and constrained confusion totals for the report.
    std::map<int, detail::Counts> plain;
    for (const PredictionRecord& r : records) {
        for (int id : r.pred) {
            if (r.gold.count(id)) {
                ++plain[id].tp;
            } else {
                ++plain[id].fp;
            }
        }
        for (int id : r.gold) {
            if (!r.pred.count(id)) {
                ++plain[id].fn;
            }
        }
    }
    const detail::Counts plain_total = detail::micro(plain);
    rep.label_tp = plain_total.tp;
    rep.label_fp = plain_total.fp;
    rep.label_fn = plain_total.fn;

    {
        std::map<int, detail::Counts> cons;
        for (const PredictionRecord& r : records) {
            auto valid_hit = [&](int id) {
                if (!r.pred.count(id) || !r.gold.count(id)) {
                    return false;
                }
                for (int a : h.ancestors(id)) {
                    if (!r.pred.count(a) || !r.gold.count(a)) {
                        return false;
                    }
                }
                return true;
            };
            for (int id : r.pred) {
                if (valid_hit(id)) {
                    ++cons[id].tp;
                } else {
                    ++cons[id].fp;
                }
            }
            for (int id : r.gold) {
                if (!(r.pred.count(id) && valid_hit(id))) {
                    ++cons[id].fn;
                }
            }
        }
        const detail::Counts cons_total = detail::micro(cons);
        rep.cons_tp = cons_total.tp;
        rep.cons_fp = cons_total.fp;
        rep.cons_fn = cons_total.fn;
    }

    const PathMetricResult pm = path_metric(records, h);
    rep.pmicro_f1 = pm.pmicro_f1;
    rep.pmacro_f1 = pm.pmacro_f1;
    rep.raw_pmicro_f1 = pm.raw_pmicro_f1;
    rep.raw_pmacro_f1 = pm.raw_pmacro_f1;
    rep.gamma = pm.gamma;
    rep.count_gold = pm.count_gold;
    rep.count_invalid = pm.count_invalid;
    rep.path_tp = pm.tp;
    rep.path_fp = pm.fp;
    rep.path_fn = pm.fn;
    return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerScore& ls : rep.per_layer) {
        layers.push_back({{"depth", ls.depth}, {"micro_f1", ls.micro_f1}, {"macro_f1", ls.macro_f1}});
    }
    return nlohmann::json{
        {"micro_f1", rep.micro_f1},
        {"macro_f1", rep.macro_f1},
        {"cmicro_f1", rep.cmicro_f1},
        {"cmacro_f1", rep.cmacro_f1},
        {"pmicro_f1", rep.pmicro_f1},
        {"pmacro_f1", rep.pmacro_f1},
        {"raw_pmicro_f1", rep.raw_pmicro_f1},
        {"raw_pmacro_f1", rep.raw_pmacro_f1},
        {"gamma", rep.gamma},
        {"count_gold", rep.count_gold},
        {"count_invalid", rep.count_invalid},
        {"counts",
         {{"label", {{"tp", rep.label_tp}, {"fp", rep.label_fp}, {"fn", rep.label_fn}}},
          {"constrained", {{"tp", rep.cons_tp}, {"fp", rep.cons_fp}, {"fn", rep.cons_fn}}},
          {"path", {{"tp", rep.path_tp}, {"fp", rep.path_fp}, {"fn", rep.path_fn}}}}},
        {"per_layer", layers}};
}

inline nlohmann::json prediction_to_json(const PredictionRecord& r, const Hierarchy& h) {
    nlohmann::json gold = nlohmann::json::array();
    for (int id : r.gold) {
        gold.push_back(h.name_of(id));
    }
    nlohmann::json pred = nlohmann::json::array();
    for (int id : r.pred) {
        pred.push_back(h.name_of(id));
    }
    return nlohmann::json{{"id", r.id}, {"gold", gold}, {"pred", pred}};
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j, const Hierarchy& h) {
    PredictionRecord r;
    r.id = j.at("id").get<std::string>();
    for (const auto& name : j.at("gold")) {
        r.gold.insert(h.id_of(name.get<std::string>()));
    }
    for (const auto& name : j.at("pred")) {
        r.pred.insert(h.id_of(name.get<std::string>()));
    }
    return r;
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path, const Hierarchy& h) {
    std::ifstream in(path);
    require(in.good(), "predictions: cannot open '" + path + "'");
    std::vector<PredictionRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        records.push_back(prediction_from_json(nlohmann::json::parse(line), h));
    }
    return records;
}

}  // namespace hierverb
