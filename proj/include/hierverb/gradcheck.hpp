#pragma once

// Central-finite-difference verification of the analytic gradients, run for
// every parameter group under all eight combinations of mode, contrastive
// variant, and constraint-chain source.

#include <cmath>
#include <string>
#include <vector>

#include "hierverb/common.hpp"
#include "hierverb/encoding.hpp"
#include "hierverb/hierarchy.hpp"
#include "hierverb/losses.hpp"
#include "hierverb/verbalizer.hpp"

namespace hierverb {

struct GradCheckRow {
    std::string combo;
    std::string group;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double worst = 0.0;
    bool pass = true;
};

namespace detail {

inline double rel_err(double a, double b) {
    const double diff = std::fabs(a - b);
    if (diff <= 1e-8) {
        return 0.0;
    }
    return diff / std::max(std::fabs(a), std::fabs(b));
}

struct GradCheckSetup {
    Hierarchy hierarchy;
    Vocab vocab;
    EncoderParams encoder;
    VerbalizerHead head;
    std::vector<TrainExample> batch;
};

// Depth-3 taxonomy (2/4/8 labels) and a small batch; dropout stays at zero so
// the loss is a pure function of the parameters. Single-path documents carry
// one leaf path, multi-path ones may carry two.
inline GradCheckSetup make_gradcheck_setup(int hidden, int batch_size, Mode mode,
                                           std::uint64_t seed) {
    GradCheckSetup s;
    std::vector<Edge> edges;
    for (int i = 0; i < 2; ++i) {
        const std::string a = "a" + std::to_string(i);
        edges.emplace_back(std::nullopt, a);
        for (int j = 0; j < 2; ++j) {
            const std::string b = a + "b" + std::to_string(j);
            edges.emplace_back(a, b);
            for (int k = 0; k < 2; ++k) {
                edges.emplace_back(b, b + "c" + std::to_string(k));
            }
        }
    }
    s.hierarchy = Hierarchy::from_edges(edges);

    Rng rng(seed);
    std::vector<std::string> texts;
    std::vector<std::set<int>> labels;
    for (int i = 0; i < batch_size; ++i) {
        const int leaf_count = static_cast<int>(s.hierarchy.leaf_paths().size());
        std::set<int> ids;
        const int first = rng.below_int(leaf_count);
        for (int nid : s.hierarchy.path(first).nodes) {
            ids.insert(nid);
        }
        if (mode == Mode::MultiPath && rng.uniform01() < 0.5) {
            const int second = rng.below_int(leaf_count);
            for (int nid : s.hierarchy.path(second).nodes) {
                ids.insert(nid);
            }
        }
        std::string text;
        const int tokens = 3 + rng.below_int(4);
        for (int t = 0; t < tokens; ++t) {
            if (t > 0) {
                text += ' ';
            }
            text += "w" + std::to_string(rng.below_int(12));
        }
        texts.push_back(text);
        labels.push_back(std::move(ids));
    }

    // Include the label names so the head init is not uniformly UNK-backed.
    std::vector<std::string> vocab_texts = texts;
    for (const LabelNode& node : s.hierarchy.nodes()) {
        vocab_texts.push_back(node.name);
    }
    s.vocab = Vocab::build(vocab_texts, s.hierarchy.depth());
    s.encoder = EncoderParams::init(s.vocab.size(), s.hierarchy.depth(), hidden, /*dropout=*/0.0, rng);
    s.head = init_head(s.hierarchy, s.encoder.embed, s.vocab, mode);
    for (int i = 0; i < batch_size; ++i) {
        Document doc;
        doc.id = "g" + std::to_string(i);
        doc.text = texts[static_cast<std::size_t>(i)];
        doc.labels = labels[static_cast<std::size_t>(i)];
        derive_paths(doc, s.hierarchy);
        s.batch.push_back(make_example(doc, s.hierarchy, s.vocab));
    }
    return s;
}

}  // namespace detail

inline GradCheckReport run_gradcheck(int hidden = 8, int batch_size = 4, double tolerance = 1e-4,
                                     double step = 1e-5, std::uint64_t seed = 17) {
    GradCheckReport report;

    for (Mode mode : {Mode::SinglePath, Mode::MultiPath}) {
        detail::GradCheckSetup setup = detail::make_gradcheck_setup(hidden, batch_size, mode, seed);
        for (FhcVariant variant : {FhcVariant::AsWritten, FhcVariant::InfoNce}) {
            for (HccSource source : {HccSource::Raw, HccSource::Recursive}) {
                LossConfig cfg;
                cfg.mode = mode;
                cfg.fhc_variant = variant;
                cfg.hcc_source = source;
                cfg.lambda1 = 0.7;
                cfg.lambda2 = 0.3;
                cfg.alpha = 1.0;
                cfg.beta = 0.4;
                cfg.tau = 0.1;

                const std::string combo = std::string(to_string(mode)) + "/" + to_string(variant) +
                                          "/" + to_string(source);

                auto loss_at = [&]() {
                    Rng rng(0);  // dropout is zero, so this is never consumed
                    return forward_batch(setup.encoder, setup.head, setup.hierarchy, setup.batch,
                                         cfg, rng, /*train_mode=*/true)
                        .total;
                };
                Rng rng(0);
                const BatchEval ev = forward_batch(setup.encoder, setup.head, setup.hierarchy,
                                                   setup.batch, cfg, rng, /*train_mode=*/true);
                const Gradients grads = backward_batch(setup.encoder, setup.head, setup.hierarchy,
                                                       setup.batch, cfg, ev);

                auto check_group = [&](const std::string& group, double* params,
                                       const double* analytic, std::size_t count) {
                    double worst = 0.0;
                    for (std::size_t i = 0; i < count; ++i) {
                        const double saved = params[i];
                        params[i] = saved + step;
                        const double up = loss_at();
                        params[i] = saved - step;
                        const double down = loss_at();
                        params[i] = saved;
                        const double fd = (up - down) / (2.0 * step);
                        worst = std::max(worst, detail::rel_err(fd, analytic[i]));
                    }
                    GradCheckRow row;
                    row.combo = combo;
                    row.group = group;
                    row.max_rel_err = worst;
                    row.pass = worst <= tolerance;
                    report.worst = std::max(report.worst, worst);
                    report.pass = report.pass && row.pass;
                    report.rows.push_back(std::move(row));
                };

                check_group("E", setup.encoder.embed.data.data(), grads.embed.data.data(),
                            setup.encoder.embed.data.size());
                {
                    GradCheckRow row;  // A and u aggregated over depths below
                    double worst_a = 0.0;
                    double worst_u = 0.0;
                    for (std::size_t d = 0; d < setup.encoder.proj.size(); ++d) {
                        Mat& a = setup.encoder.proj[d];
                        for (std::size_t i = 0; i < a.data.size(); ++i) {
                            const double saved = a.data[i];
                            a.data[i] = saved + step;
                            const double up = loss_at();
                            a.data[i] = saved - step;
                            const double down = loss_at();
                            a.data[i] = saved;
                            worst_a = std::max(
                                worst_a, detail::rel_err((up - down) / (2.0 * step), grads.proj[d].data[i]));
                        }
                        Vec& u = setup.encoder.shift[d];
                        for (std::size_t i = 0; i < u.size(); ++i) {
                            const double saved = u[i];
                            u[i] = saved + step;
                            const double up = loss_at();
                            u[i] = saved - step;
                            const double down = loss_at();
                            u[i] = saved;
                            worst_u = std::max(
                                worst_u, detail::rel_err((up - down) / (2.0 * step), grads.shift[d][i]));
                        }
                    }
                    row.combo = combo;
                    row.group = "A";
                    row.max_rel_err = worst_a;
                    row.pass = worst_a <= tolerance;
                    report.worst = std::max(report.worst, worst_a);
                    report.pass = report.pass && row.pass;
                    report.rows.push_back(row);
                    row.group = "u";
                    row.max_rel_err = worst_u;
                    row.pass = worst_u <= tolerance;
                    report.worst = std::max(report.worst, worst_u);
                    report.pass = report.pass && row.pass;
                    report.rows.push_back(row);
                }
                {
                    double worst_w = 0.0;
                    double worst_b = 0.0;
                    for (std::size_t d = 0; d < setup.head.weight.size(); ++d) {
                        Mat& w = setup.head.weight[d];
                        for (std::size_t i = 0; i < w.data.size(); ++i) {
                            const double saved = w.data[i];
                            w.data[i] = saved + step;
                            const double up = loss_at();
                            w.data[i] = saved - step;
                            const double down = loss_at();
                            w.data[i] = saved;
                            worst_w = std::max(
                                worst_w, detail::rel_err((up - down) / (2.0 * step), grads.weight[d].data[i]));
                        }
                        Vec& b = setup.head.bias[d];
                        for (std::size_t i = 0; i < b.size(); ++i) {
                            const double saved = b[i];
                            b[i] = saved + step;
                            const double up = loss_at();
                            b[i] = saved - step;
                            const double down = loss_at();
                            b[i] = saved;
                            worst_b = std::max(
                                worst_b, detail::rel_err((up - down) / (2.0 * step), grads.bias[d][i]));
                        }
                    }
                    GradCheckRow row;
                    row.combo = combo;
                    row.group = "W";
                    row.max_rel_err = worst_w;
                    row.pass = worst_w <= tolerance;
                    report.worst = std::max(report.worst, worst_w);
                    report.pass = report.pass && row.pass;
                    report.rows.push_back(row);
                    row.group = "b";
                    row.max_rel_err = worst_b;
                    row.pass = worst_b <= tolerance;
                    report.worst = std::max(report.worst, worst_b);
                    report.pass = report.pass && row.pass;
                    report.rows.push_back(row);
                }
            }
        }
    }
    return report;
}

}  // namespace hierverb
