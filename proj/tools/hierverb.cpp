// Command-line front end: synthetic corpus generation, support-set sampling,
// training, evaluation, and gradient checking, driven by a flat key=value
// config file plus named presets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hierverb/hierverb.hpp"

namespace {

namespace fs = std::filesystem;
using namespace hierverb;

struct CommonArgs {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<int> k;
    std::string out_dir;
};

RunConfig build_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.preset.empty()) {
        cfg.apply_preset(args.preset);
    }
    if (!args.config.empty()) {
        cfg.apply_file(args.config);
    }
    cfg.apply_env();
    if (args.seed) {
        cfg.seed = *args.seed;
    }
    if (args.k) {
        cfg.k = *args.k;
    }
    if (!args.out_dir.empty()) {
        cfg.out_dir = args.out_dir;
    }
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    return cfg;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write '" + path + "'");
    out << content;
}

int cmd_synth(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    SyntheticSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    const SyntheticCorpus corpus = generate_corpus(spec);
    const std::string hier_path = cfg.out_dir + "/hierarchy.json";
    const std::string data_path = cfg.out_dir + "/dataset.jsonl";
    write_text(hier_path, edges_to_json(corpus.edges).dump(2) + "\n");
    write_text(data_path, corpus_to_jsonl(corpus));
    const Hierarchy h = Hierarchy::load(hier_path);
    std::printf("wrote %s (%d labels, depth %d, %zu paths) and %s (%zu documents)\n",
                hier_path.c_str(), h.size(), h.depth(), h.leaf_paths().size(), data_path.c_str(),
                corpus.documents.size());
    return 0;
}

int cmd_sample(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    require(!cfg.hierarchy_path.empty(), "sample: config key 'hierarchy' is required");
    require(!cfg.dataset_path.empty(), "sample: config key 'dataset' is required");
    const Hierarchy h = Hierarchy::load(cfg.hierarchy_path);
    const std::vector<Document> docs = load_documents(cfg.dataset_path, h);
    auto [filtered, paths] = filter_rare_paths(docs, cfg.k, h);
    const SupportSet support = greedy_sample(filtered, paths, cfg.k, cfg.seed, cfg.order);
    write_support(support, h, cfg.out_dir + "/support.jsonl", cfg.out_dir + "/manifest.json");
    std::printf("support set: %zu documents over %zu paths (K=%d, seed=%llu)\n",
                support.documents.size(), paths.size(), cfg.k,
                static_cast<unsigned long long>(cfg.seed));
    for (const auto& [p, c] : support.counts) {
        std::printf("  path %d (%s): %d\n", p, h.name_of(h.path(p).nodes.back()).c_str(), c);
    }
    return 0;
}

// Dev set: explicit file when given; otherwise a second disjoint K-shot
// sample drawn with seed+1 from what the support draw left behind, falling
// back to the whole remainder when it cannot support K shots.
std::vector<Document> make_dev_set(const RunConfig& cfg, const Hierarchy& h,
                                   const std::vector<Document>& pool,
                                   const std::vector<Document>& support) {
    if (!cfg.dev_path.empty()) {
        return load_documents(cfg.dev_path, h);
    }
    std::set<std::string> taken;
    for (const Document& d : support) {
        taken.insert(d.id);
    }
    std::vector<Document> remaining;
    for (const Document& d : pool) {
        if (!taken.count(d.id)) {
            remaining.push_back(d);
        }
    }
    if (remaining.empty()) {
        std::fprintf(stderr, "warning: no documents left for a dev split; using the support set\n");
        return support;
    }
    try {
        auto [filtered, paths] = filter_rare_paths(remaining, cfg.k, h);
        return greedy_sample(filtered, paths, cfg.k, cfg.seed + 1, cfg.order).documents;
    } catch (const Error&) {
        return remaining;
    }
}

int cmd_train(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    require(!cfg.hierarchy_path.empty(), "train: config key 'hierarchy' is required");
    const Hierarchy h = Hierarchy::load(cfg.hierarchy_path);

    std::vector<Document> support;
    std::vector<Document> dev;
    if (!cfg.support_path.empty()) {
        support = load_documents(cfg.support_path, h);
        require(!cfg.dev_path.empty() || !cfg.dataset_path.empty(),
                "train: need 'dev' or 'dataset' to build a dev set");
        if (!cfg.dev_path.empty()) {
            dev = load_documents(cfg.dev_path, h);
        } else {
            dev = make_dev_set(cfg, h, load_documents(cfg.dataset_path, h), support);
        }
    } else {
        require(!cfg.dataset_path.empty(), "train: config key 'support' or 'dataset' is required");
        const std::vector<Document> docs = load_documents(cfg.dataset_path, h);
        auto [filtered, paths] = filter_rare_paths(docs, cfg.k, h);
        support = greedy_sample(filtered, paths, cfg.k, cfg.seed, cfg.order).documents;
        dev = make_dev_set(cfg, h, filtered, support);
    }

    const TrainResult result = train(cfg, h, support, dev);
    const std::string ckpt_path =
        cfg.checkpoint_path.empty() ? cfg.out_dir + "/checkpoint.bin" : cfg.checkpoint_path;
    save_model(result.best, ckpt_path);
    std::string log_lines;
    for (const EpochLog& log : result.log) {
        log_lines += epoch_log_to_json(log).dump();
        log_lines += '\n';
    }
    write_text(cfg.out_dir + "/train_log.jsonl", log_lines);
    std::printf("trained %zu epochs; best %s %.4f at epoch %d; checkpoint %s\n", result.log.size(),
                cfg.early_metric.c_str(), result.best_metric, result.best_epoch, ckpt_path.c_str());
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    require(!cfg.hierarchy_path.empty(), "eval: config key 'hierarchy' is required");
    require(!cfg.test_path.empty(), "eval: config key 'test' is required");
    const std::string ckpt_path =
        cfg.checkpoint_path.empty() ? cfg.out_dir + "/checkpoint.bin" : cfg.checkpoint_path;
    const Hierarchy h = Hierarchy::load(cfg.hierarchy_path);
    const Model model = load_model(ckpt_path);
    const std::vector<Document> test = load_documents(cfg.test_path, h);

    std::vector<PredictionRecord> records;
    const EvalReport report = evaluate_model(model, h, test, cfg, &records);

    write_text(cfg.out_dir + "/report.json", report_to_json(report).dump(2) + "\n");
    std::string pred_lines;
    for (const PredictionRecord& r : records) {
        pred_lines += prediction_to_json(r, h).dump();
        pred_lines += '\n';
    }
    write_text(cfg.out_dir + "/predictions.jsonl", pred_lines);

    std::printf("micro_f1 %.4f  macro_f1 %.4f\n", report.micro_f1, report.macro_f1);
    std::printf("cmicro_f1 %.4f  cmacro_f1 %.4f\n", report.cmicro_f1, report.cmacro_f1);
    std::printf("pmicro_f1 %.4f  pmacro_f1 %.4f  (gamma %.4f, invalid %lld / gold %lld)\n",
                report.pmicro_f1, report.pmacro_f1, report.gamma, report.count_invalid,
                report.count_gold);
    return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
    RunConfig cfg = build_config(args);
    const GradCheckReport report =
        run_gradcheck(cfg.gc_hidden, cfg.gc_batch, cfg.gc_tolerance, cfg.gc_step, cfg.seed + 17);
    std::printf("%-34s %-6s %-12s %s\n", "combo", "group", "max_rel_err", "status");
    for (const GradCheckRow& row : report.rows) {
        std::printf("%-34s %-6s %-12.3e %s\n", row.combo.c_str(), row.group.c_str(),
                    row.max_rel_err, row.pass ? "pass" : "FAIL");
    }
    std::printf("worst %.3e (tolerance %.1e): %s\n", report.worst, cfg.gc_tolerance,
                report.pass ? "pass" : "FAIL");
    return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot hierarchical text classification toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config, "flat key=value config file");
        sub->add_option("--preset", args.preset, "hyperparameter preset: wos|dbpedia|rcv1");
        sub->add_option("--seed", args.seed, "RNG seed (overrides config and HIERVERB_SEED)");
        sub->add_option("--k", args.k, "shots per path (overrides config)");
        sub->add_option("--out", args.out_dir, "output directory (overrides config)");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic hierarchy and corpus");
    CLI::App* sample = app.add_subcommand("sample", "draw a K-shot support set");
    CLI::App* train = app.add_subcommand("train", "train a model on a support set");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients by finite differences");
    for (CLI::App* sub : {synth, sample, train, eval, gradcheck}) {
        add_common(sub);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(args);
        }
        if (sample->parsed()) {
            return cmd_sample(args);
        }
        if (train->parsed()) {
            return cmd_train(args);
        }
        if (eval->parsed()) {
            return cmd_eval(args);
        }
        if (gradcheck->parsed()) {
            return cmd_gradcheck(args);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
