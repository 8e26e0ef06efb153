// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its own tolerances; an optional argv filter
// runs a single criterion by number.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hierverb/hierverb.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace hierverb;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::vector<Document> materialize(const SyntheticCorpus& corpus, const Hierarchy& h) {
    std::vector<Document> docs;
    for (const RawDocument& rd : corpus.documents) {
        Document d;
        d.id = rd.id;
        d.text = rd.text;
        for (const std::string& name : rd.labels) {
            d.labels.insert(h.id_of(name));
        }
        derive_paths(d, h);
        docs.push_back(std::move(d));
    }
    return docs;
}

// Shared toy-run settings: the reference encoder wants far larger rates than
// a pretrained transformer, which the config allows.
RunConfig toy_config(int epochs, int k, std::uint64_t seed) {
    RunConfig cfg;
    cfg.apply_preset("wos");
    cfg.epochs = epochs;
    cfg.k = k;
    cfg.seed = seed;
    cfg.hidden = 32;
    cfg.lr = 0.05;
    cfg.verbalizer_lr = 0.1;
    return cfg;
}

struct SplitRun {
    EvalReport train_report;
    EvalReport heldout_report;
};

SplitRun run_split(const RunConfig& cfg, const Hierarchy& h, const std::vector<Document>& docs) {
    auto [filtered, paths] = filter_rare_paths(docs, cfg.k, h);
    const SupportSet support = greedy_sample(filtered, paths, cfg.k, cfg.seed, cfg.order);
    std::set<std::string> taken;
    for (const Document& d : support.documents) {
        taken.insert(d.id);
    }
    std::vector<Document> heldout;
    for (const Document& d : filtered) {
        if (!taken.count(d.id)) {
            heldout.push_back(d);
        }
    }
    const TrainResult result = train(cfg, h, support.documents, heldout);
    SplitRun out;
    out.train_report = evaluate_model(result.best, h, support.documents, cfg);
    out.heldout_report = evaluate_model(result.best, h, heldout, cfg);
    return out;
}

// --------------------------------------------------------------------------
// 1. Gradient suite
// --------------------------------------------------------------------------
Outcome criterion_gradients() {
    const GradCheckReport report = run_gradcheck(/*hidden=*/8, /*batch_size=*/4,
                                                 /*tolerance=*/1e-4, /*step=*/1e-5, /*seed=*/17);
    Outcome out;
    out.pass = report.pass;
    std::ostringstream os;
    os << report.rows.size() << " group checks, max rel err " << report.worst;
    if (report.worst == 0.0) {
        os << " (all diffs below the 1e-8 noise floor)";
    }
    out.detail = os.str();
    return out;
}

// --------------------------------------------------------------------------
// 2. Contrastive-form identity
// --------------------------------------------------------------------------
Outcome criterion_fhc_identity() {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = std::vector<int>{2, 3, 5}[rng.below_int(3)];
        const int depth = 1 + rng.below_int(3);
        std::vector<MaskHiddenStates> views(static_cast<std::size_t>(2 * n));
        for (MaskHiddenStates& v : views) {
            v.h.assign(static_cast<std::size_t>(depth), Vec(6));
            for (Vec& h : v.h) {
                for (double& x : h) {
                    x = rng.uniform(-1.0, 1.0);
                }
            }
        }
        std::vector<DepthLabels> batch;
        for (int i = 0; i < n; ++i) {
            DepthLabels g;
            for (int d = 0; d < depth; ++d) {
                g.push_back({rng.below_int(4)});
            }
            batch.push_back(std::move(g));
        }
        std::vector<Mat> lattice;
        for (int d = 0; d < depth; ++d) {
            lattice.push_back(lattice_matrix(batch, d));
        }
        const bool include_self = rng.uniform01() < 0.5;
        const double alpha = rng.uniform(0.0, 2.0);
        const double literal = fhc_loss_literal(views, lattice, alpha, include_self);
        const double collapsed = fhc_loss_as_written(views, lattice, alpha, include_self);
        worst = std::max(worst, std::fabs(literal - collapsed));
    }
    Outcome out;
    out.pass = worst <= 1e-10;
    std::ostringstream os;
    os << "100 batches, max |literal - collapsed| = " << worst << " (tol 1e-10)";
    out.detail = os.str();
    return out;
}

// --------------------------------------------------------------------------
// 3. Constraint-chain mass conservation
// --------------------------------------------------------------------------
Outcome criterion_hcc_conservation() {
    Rng rng(3);
    double worst = 0.0;
    bool identity_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Hierarchy h = helpers::random_layered_tree(rng);
        LayerProbabilities probs;
        probs.mode = Mode::SinglePath;
        for (int d = 1; d <= h.depth(); ++d) {
            Vec logits(static_cast<std::size_t>(h.layer_size(d)));
            for (double& x : logits) {
                x = rng.uniform(-3.0, 3.0);
            }
            probs.p.push_back(softmax(logits));
        }
        for (double beta : {0.0, 0.25, 0.5, 1.0}) {
            for (HccSource src : {HccSource::Raw, HccSource::Recursive}) {
                const LayerProbabilities prop = hcc_propagate(probs, h, beta, src);
                for (const Vec& layer : prop.p) {
                    double sum = 0.0;
                    for (double x : layer) {
                        sum += x;
                    }
                    worst = std::max(worst, std::fabs(sum - 1.0));
                }
                if (beta == 0.0) {
                    for (std::size_t d = 0; d < prop.p.size(); ++d) {
                        identity_ok = identity_ok && prop.p[d] == probs.p[d];
                    }
                }
            }
        }
    }
    Outcome out;
    out.pass = worst <= 1e-9 && identity_ok;
    std::ostringstream os;
    os << "100 models, max |sum-1| = " << worst << " (tol 1e-9), beta=0 identity "
       << (identity_ok ? "exact" : "BROKEN");
    out.detail = os.str();
    return out;
}

// --------------------------------------------------------------------------
// 4. Sampler properties
// --------------------------------------------------------------------------
Outcome criterion_sampler() {
    Rng rng(4);
    int coverage_checks = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Hierarchy h = helpers::random_layered_tree(rng);
        const bool single = trial % 2 == 0;
        const int k = 1 + rng.below_int(3);
        std::vector<Document> docs = helpers::random_documents(rng, h, 10 + rng.below_int(30), single);
        // Guarantee at least one surviving path.
        for (int i = 0; i < k; ++i) {
            Document d;
            d.id = "anchor" + std::to_string(i);
            d.text = "anchor text";
            for (int id : h.path(0).nodes) {
                d.labels.insert(id);
            }
            derive_paths(d, h);
            docs.push_back(std::move(d));
        }

        auto [f1, p1] = filter_rare_paths(docs, k, h);
        auto [f2, p2] = filter_rare_paths(f1, k, h);
        if (p1 != p2 || f1.size() != f2.size()) {
            return {false, "filter fixpoint broken at trial " + std::to_string(trial)};
        }

        const SupportSet a = greedy_sample(f1, p1, k, 1000 + trial);
        const SupportSet b = greedy_sample(f1, p1, k, 1000 + trial);
        if (documents_to_jsonl(a.documents, h) != documents_to_jsonl(b.documents, h) ||
            support_manifest(a).dump() != support_manifest(b).dump()) {
            return {false, "determinism broken at trial " + std::to_string(trial)};
        }

        std::set<std::string> ids;
        for (const Document& d : a.documents) {
            if (!ids.insert(d.id).second) {
                return {false, "document drawn twice at trial " + std::to_string(trial)};
            }
        }
        for (const auto& [p, c] : a.counts) {
            ++coverage_checks;
            if (c < k) {
                return {false, "coverage below K at trial " + std::to_string(trial)};
            }
            if (single && c != k) {
                return {false, "single-path equality broken at trial " + std::to_string(trial)};
            }
        }
    }

    // Two paths with one sentence each: the 1-shot support set is exactly both.
    const Hierarchy h = Hierarchy::from_edges({{std::nullopt, "CS"},
                                               {std::nullopt, "Medical"},
                                               {{"CS"}, "Computer Vision"},
                                               {{"Medical"}, "Medicare"}});
    std::vector<Document> two;
    {
        Document a;
        a.id = "A";
        a.text = "vision transformers at the edge";
        a.labels = {h.id_of("CS"), h.id_of("Computer Vision")};
        derive_paths(a, h);
        Document b;
        b.id = "B";
        b.text = "medicare costs and coverage";
        b.labels = {h.id_of("Medical"), h.id_of("Medicare")};
        derive_paths(b, h);
        two = {a, b};
    }
    auto [ftwo, ptwo] = filter_rare_paths(two, 1, h);
    const SupportSet s = greedy_sample(ftwo, ptwo, 1, 1);
    std::set<std::string> got{s.documents[0].id, s.documents[1].id};
    if (s.documents.size() != 2 || got != std::set<std::string>{"A", "B"}) {
        return {false, "two-path one-shot scenario did not return both sentences"};
    }

    std::ostringstream os;
    os << "200 datasets, " << coverage_checks << " path-coverage checks";
    return {true, os.str()};
}

// --------------------------------------------------------------------------
// 5. Metric oracles
// --------------------------------------------------------------------------
Outcome criterion_metrics() {
    Rng rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const Hierarchy h = helpers::random_small_tree(rng, 12, 3);
        std::vector<PredictionRecord> records;
        const int docs = 1 + rng.below_int(6);
        const int paths = static_cast<int>(h.leaf_paths().size());
        for (int i = 0; i < docs; ++i) {
            PredictionRecord r;
            r.id = "r" + std::to_string(i);
            const int n_paths = 1 + rng.below_int(2);
            for (int p = 0; p < n_paths; ++p) {
                for (int id : h.path(rng.below_int(paths)).nodes) {
                    r.gold.insert(id);
                }
            }
            const int preds = rng.below_int(h.size() + 1);
            for (int p = 0; p < preds; ++p) {
                r.pred.insert(rng.below_int(h.size()));
            }
            records.push_back(std::move(r));
        }

        auto [micro, macro, layers] = micro_macro_f1(records, h);
        const oracle::F1Pair plain = oracle::plain_f1(records, h);
        auto [cmicro, cmacro] = constrained_f1(records, h);
        const oracle::F1Pair cons = oracle::constrained_f1(records, h);
        const PathMetricResult pm = path_metric(records, h);
        const oracle::PathScores ps = oracle::path_scores(records, h);

        worst = std::max({worst, std::fabs(micro - plain.micro), std::fabs(macro - plain.macro),
                          std::fabs(cmicro - cons.micro), std::fabs(cmacro - cons.macro),
                          std::fabs(pm.pmicro_f1 - ps.pmicro), std::fabs(pm.pmacro_f1 - ps.pmacro)});
        if (pm.count_gold != ps.count_gold || pm.count_invalid != ps.count_invalid) {
            return {false, "count mismatch against oracle at trial " + std::to_string(trial)};
        }
    }

    // Named cases on the numbered tree.
    const Hierarchy h = helpers::numbered_tree();
    auto rec = [&](std::initializer_list<const char*> gold, std::initializer_list<const char*> pred) {
        PredictionRecord r;
        r.id = "x";
        for (const char* g : gold) {
            r.gold.insert(h.id_of(g));
        }
        for (const char* p : pred) {
            r.pred.insert(h.id_of(p));
        }
        return r;
    };
    const PathMetricResult full = path_metric({rec({"1", "3", "7"}, {"1", "3", "7"})}, h);
    if (full.tp != 1 || full.count_invalid != 0) {
        return {false, "fully predicted gold path did not register as a path true positive"};
    }
    const PathMetricResult broken = path_metric({rec({"1", "3", "7"}, {"1", "3", "10"})}, h);
    if (broken.count_invalid != 3) {
        return {false, "three pathless labels should all count as invalid"};
    }
    if (std::fabs(gamma_penalty(0, 7) - 1.0) > 1e-12) {
        return {false, "gamma(0) must be 1"};
    }
    const double g1 = gamma_penalty(3, 3);
    if (std::fabs(g1 - 0.537883) > 1e-6) {
        return {false, "gamma at a=1 is off: " + std::to_string(g1)};
    }

    std::ostringstream os;
    os << "500 instances, max |lib - oracle| = " << worst;
    return {worst <= 1e-12, os.str()};
}

// --------------------------------------------------------------------------
// 6. End-to-end learning
// --------------------------------------------------------------------------
Outcome criterion_learning() {
    SyntheticSpec spec;
    spec.branching = {3, 4};
    spec.docs_per_path = 5;
    spec.signal = 1.0;
    spec.tokens_per_doc = 10;
    spec.noise_vocab = 20;
    spec.seed = 6;
    const SyntheticCorpus corpus = generate_corpus(spec);
    const Hierarchy h = Hierarchy::from_edges(corpus.edges);
    const std::vector<Document> docs = materialize(corpus, h);

    double train_sum = 0.0;
    double heldout_sum = 0.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const RunConfig cfg = toy_config(/*epochs=*/200, /*k=*/4, seed);
        const SplitRun run = run_split(cfg, h, docs);
        train_sum += run.train_report.micro_f1;
        heldout_sum += run.heldout_report.micro_f1;
    }
    const double train_mean = train_sum / 3.0;
    const double heldout_mean = heldout_sum / 3.0;

    Outcome out;
    out.pass = train_mean >= 0.95 && heldout_mean >= 0.80;
    std::ostringstream os;
    os << "mean over 3 seeds: train micro " << train_mean << " (>= 0.95), held-out micro "
       << heldout_mean << " (>= 0.80)";
    out.detail = os.str();
    return out;
}

// --------------------------------------------------------------------------
// 7. Consistency direction at 1-shot
// --------------------------------------------------------------------------
Outcome criterion_consistency() {
    // Same corpus as the end-to-end learning criterion; paired seeds for the
    // two loss configurations. The comparison is statistical by nature.
    SyntheticSpec spec;
    spec.branching = {3, 4};
    spec.docs_per_path = 5;
    spec.signal = 1.0;
    spec.tokens_per_doc = 10;
    spec.noise_vocab = 20;
    spec.seed = 6;
    const SyntheticCorpus corpus = generate_corpus(spec);
    const Hierarchy h = Hierarchy::from_edges(corpus.edges);
    const std::vector<Document> docs = materialize(corpus, h);

    double with_losses = 0.0;
    double without_losses = 0.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        RunConfig full = toy_config(/*epochs=*/200, /*k=*/1, seed);
        full.loss.lambda1 = 1.0;
        full.loss.lambda2 = 1e-2;
        with_losses += run_split(full, h, docs).heldout_report.pmicro_f1;

        RunConfig plain = toy_config(/*epochs=*/200, /*k=*/1, seed);
        plain.loss.lambda1 = 0.0;
        plain.loss.lambda2 = 0.0;
        without_losses += run_split(plain, h, docs).heldout_report.pmicro_f1;
    }
    with_losses /= 5.0;
    without_losses /= 5.0;

    Outcome out;
    out.pass = with_losses >= without_losses;
    std::ostringstream os;
    os << "mean PMicro over 5 seeds: with hierarchy losses " << with_losses << ", without "
       << without_losses;
    out.detail = os.str();
    return out;
}

// --------------------------------------------------------------------------
// 8. Determinism & round trips
// --------------------------------------------------------------------------
struct PipelineBytes {
    std::string support;
    std::string manifest;
    std::string checkpoint;
    std::string report;
    Model model;
    std::vector<Document> heldout;
};

PipelineBytes run_pipeline_once(const Hierarchy& h, const std::vector<Document>& docs,
                                const RunConfig& cfg) {
    PipelineBytes out;
    auto [filtered, paths] = filter_rare_paths(docs, cfg.k, h);
    const SupportSet support = greedy_sample(filtered, paths, cfg.k, cfg.seed, cfg.order);
    out.support = documents_to_jsonl(support.documents, h);
    out.manifest = support_manifest(support).dump(2);

    std::set<std::string> taken;
    for (const Document& d : support.documents) {
        taken.insert(d.id);
    }
    for (const Document& d : filtered) {
        if (!taken.count(d.id)) {
            out.heldout.push_back(d);
        }
    }
    const TrainResult result = train(cfg, h, support.documents, out.heldout);
    out.model = result.best;
    std::ostringstream ckpt(std::ios::binary);
    save_model(result.best, ckpt);
    out.checkpoint = ckpt.str();
    out.report = report_to_json(evaluate_model(result.best, h, out.heldout, cfg)).dump(2);
    return out;
}

Outcome criterion_determinism() {
    SyntheticSpec spec;
    spec.branching = {2, 3};
    spec.docs_per_path = 4;
    spec.seed = 8;
    const SyntheticCorpus corpus = generate_corpus(spec);
    const Hierarchy h = Hierarchy::from_edges(corpus.edges);
    const std::vector<Document> docs = materialize(corpus, h);

    RunConfig cfg = toy_config(/*epochs=*/15, /*k=*/2, /*seed=*/99);
    const PipelineBytes a = run_pipeline_once(h, docs, cfg);
    const PipelineBytes b = run_pipeline_once(h, docs, cfg);

    if (a.support != b.support || a.manifest != b.manifest) {
        return {false, "support set bytes differ between identical runs"};
    }
    if (a.checkpoint != b.checkpoint) {
        return {false, "checkpoint bytes differ between identical runs"};
    }
    if (a.report != b.report) {
        return {false, "evaluation report bytes differ between identical runs"};
    }

    // Save -> load -> eval must equal the in-memory evaluation bit for bit.
    std::istringstream in(a.checkpoint);
    const Model loaded = load_model(in);
    std::vector<PredictionRecord> direct, reloaded;
    const EvalReport rep_mem = evaluate_model(a.model, h, a.heldout, cfg, &direct);
    const EvalReport rep_load = evaluate_model(loaded, h, a.heldout, cfg, &reloaded);
    if (report_to_json(rep_mem).dump() != report_to_json(rep_load).dump()) {
        return {false, "reloaded checkpoint evaluates differently"};
    }
    for (std::size_t i = 0; i < direct.size(); ++i) {
        if (direct[i].pred != reloaded[i].pred) {
            return {false, "reloaded checkpoint predicts differently"};
        }
    }
    return {true, "two runs byte-identical; checkpoint round trip bit-exact"};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
    double time_budget_s;  // 0 = untimed
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "gradient suite", criterion_gradients, 30.0},
        {2, "contrastive-form identity", criterion_fhc_identity, 0.0},
        {3, "constraint-chain conservation", criterion_hcc_conservation, 0.0},
        {4, "sampler properties", criterion_sampler, 0.0},
        {5, "metric oracles", criterion_metrics, 0.0},
        {6, "end-to-end learning", criterion_learning, 120.0},
        {7, "consistency direction", criterion_consistency, 0.0},
        {8, "determinism & round-trip", criterion_determinism, 0.0},
    };

    int only = 0;
    if (argc > 1) {
        only = std::atoi(argv[1]);
    }

    bool all_pass = true;
    for (const Criterion& c : criteria) {
        if (only != 0 && c.id != only) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_budget_s > 0.0 && seconds > c.time_budget_s) {
            outcome.pass = false;
            outcome.detail += " [over time budget]";
        }
        std::printf("[%d/8] %s %s: %s [%.1fs]\n", c.id, outcome.pass ? "PASS" : "FAIL", c.name,
                    outcome.detail.c_str(), seconds);
        std::fflush(stdout);
        all_pass = all_pass && outcome.pass;
    }
    return all_pass ? 0 : 1;
}
