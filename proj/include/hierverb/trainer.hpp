#pragma once

// Training loop: mini-batches over the support set, Adam with linear decay,
// a dev evaluation after every epoch, early stopping on the dev metric, and
// a binary model checkpoint (vocab + encoder + head) whose save/load round
// trip is bit-exact.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierverb/common.hpp"
#include "hierverb/config.hpp"
#include "hierverb/dataset.hpp"
#include "hierverb/encoding.hpp"
#include "hierverb/hierarchy.hpp"
#include "hierverb/losses.hpp"
#include "hierverb/metrics.hpp"
#include "hierverb/optimizer.hpp"
#include "hierverb/verbalizer.hpp"

namespace hierverb {

struct Model {
    Vocab vocab;
    EncoderParams encoder;
    VerbalizerHead head;
};

inline void save_model(const Model& model, std::ostream& out) {
    out.write("HVCKPT01", 8);
    detail::write_u32(out, static_cast<std::uint32_t>(model.vocab.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(model.encoder.depth()));
    detail::write_u32(out, static_cast<std::uint32_t>(model.encoder.hidden));
    const std::uint8_t mode = model.head.mode == Mode::SinglePath ? 0 : 1;
    out.write(reinterpret_cast<const char*>(&mode), 1);
    double dropout = model.encoder.dropout;
    out.write(reinterpret_cast<const char*>(&dropout), sizeof dropout);
    for (const std::string& tok : model.vocab.tokens) {
        detail::write_u32(out, static_cast<std::uint32_t>(tok.size()));
        out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
    }
    detail::write_doubles(out, model.encoder.embed.data.data(), model.encoder.embed.data.size());
    for (int d = 0; d < model.encoder.depth(); ++d) {
        const Mat& a = model.encoder.proj[static_cast<std::size_t>(d)];
        detail::write_doubles(out, a.data.data(), a.data.size());
        const Vec& u = model.encoder.shift[static_cast<std::size_t>(d)];
        detail::write_doubles(out, u.data(), u.size());
    }
    save_head(model.head, out);
}

inline void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "checkpoint: cannot write '" + path + "'");
    save_model(model, out);
}

inline Model load_model(std::istream& in) {
    char magic[8] = {};
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, "HVCKPT01", 8) == 0, "checkpoint: bad magic");
    const int vocab_size = static_cast<int>(detail::read_u32(in));
    const int depth = static_cast<int>(detail::read_u32(in));
    const int hidden = static_cast<int>(detail::read_u32(in));
    std::uint8_t mode_byte = 0;
    in.read(reinterpret_cast<char*>(&mode_byte), 1);
    double dropout = 0.0;
    in.read(reinterpret_cast<char*>(&dropout), sizeof dropout);
    require(in.good(), "checkpoint: truncated file");

    Model model;
    for (int i = 0; i < vocab_size; ++i) {
        const auto len = detail::read_u32(in);
        std::string tok(len, '\0');
        in.read(tok.data(), static_cast<std::streamsize>(len));
        require(in.good(), "checkpoint: truncated vocab");
        model.vocab.add(tok);
    }
    model.encoder.hidden = hidden;
    model.encoder.dropout = dropout;
    model.encoder.embed = Mat(vocab_size, hidden);
    detail::read_doubles(in, model.encoder.embed.data.data(), model.encoder.embed.data.size());
    model.encoder.proj.resize(static_cast<std::size_t>(depth));
    model.encoder.shift.resize(static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
        Mat a(hidden, hidden);
        detail::read_doubles(in, a.data.data(), a.data.size());
        model.encoder.proj[static_cast<std::size_t>(d)] = std::move(a);
        Vec u(static_cast<std::size_t>(hidden));
        detail::read_doubles(in, u.data(), u.size());
        model.encoder.shift[static_cast<std::size_t>(d)] = std::move(u);
    }
    model.head = load_head(in, mode_byte == 0 ? Mode::SinglePath : Mode::MultiPath);
    require(model.head.hidden == hidden, "checkpoint: head/encoder hidden size mismatch");
    return model;
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "checkpoint: cannot open '" + path + "'");
    return load_model(in);
}

inline void check_model_shape(const Model& model, const Hierarchy& h) {
    require(model.head.depth() == h.depth(), "checkpoint: depth does not match hierarchy");
    for (int d = 1; d <= h.depth(); ++d) {
        require(model.head.layer_size(d - 1) == h.layer_size(d),
                "checkpoint: layer " + std::to_string(d) + " size does not match hierarchy");
    }
}

// Deterministic single-pass decode of one document.
inline std::set<int> predict_labels(const Model& model, const Hierarchy& h,
                                    const std::string& text, int truncate_length,
                                    double threshold) {
    const WrappedInput input = wrap_and_tokenize(model.vocab, text, h.depth(), truncate_length);
    Rng rng(0);  // unused: dropout is off outside training
    const MaskHiddenStates states = encode(model.encoder, input, rng, /*train_mode=*/false);
    const LayerProbabilities probs = probabilities(layer_logits(model.head, states), model.head.mode);
    return decode(probs, h, threshold);
}

inline std::vector<PredictionRecord> predict_dataset(const Model& model, const Hierarchy& h,
                                                     const std::vector<Document>& docs,
                                                     int truncate_length, double threshold) {
    std::vector<PredictionRecord> records;
    records.reserve(docs.size());
    for (const Document& doc : docs) {
        PredictionRecord r;
        r.id = doc.id;
        r.gold = doc.labels;
        r.pred = predict_labels(model, h, doc.text, truncate_length, threshold);
        records.push_back(std::move(r));
    }
    return records;
}

inline EvalReport evaluate_model(const Model& model, const Hierarchy& h,
                                 const std::vector<Document>& docs, const RunConfig& cfg,
                                 std::vector<PredictionRecord>* out_records = nullptr) {
    check_model_shape(model, h);
    std::vector<PredictionRecord> records =
        predict_dataset(model, h, docs, cfg.truncate_length, cfg.decode_threshold);
    EvalReport rep = evaluate(records, h);
    if (out_records != nullptr) {
        *out_records = std::move(records);
    }
    return rep;
}

struct EpochLog {
    int epoch = 0;
    double loss_c = 0.0;
    double loss_hcc = 0.0;
    double loss_fhc = 0.0;
    double loss_total = 0.0;
    double lr = 0.0;
    EvalReport dev;
    bool best = false;
};

inline nlohmann::json epoch_log_to_json(const EpochLog& log) {
    return nlohmann::json{{"epoch", log.epoch},       {"loss_c", log.loss_c},
                          {"loss_hcc", log.loss_hcc}, {"loss_fhc", log.loss_fhc},
                          {"loss_total", log.loss_total}, {"lr", log.lr},
                          {"dev", report_to_json(log.dev)}, {"best", log.best}};
}

struct TrainResult {
    Model best;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_metric = 0.0;
};

inline double pick_metric(const EvalReport& rep, const std::string& name) {
    if (name == "micro_f1") {
        return rep.micro_f1;
    }
    if (name == "macro_f1") {
        return rep.macro_f1;
    }
    if (name == "cmicro_f1") {
        return rep.cmicro_f1;
    }
    if (name == "cmacro_f1") {
        return rep.cmacro_f1;
    }
    if (name == "pmicro_f1") {
        return rep.pmicro_f1;
    }
    if (name == "pmacro_f1") {
        return rep.pmacro_f1;
    }
    fail("unknown early-stopping metric '" + name + "'");
}

inline TrainResult train(const RunConfig& cfg, const Hierarchy& h,
                         const std::vector<Document>& support,
                         const std::vector<Document>& dev) {
    cfg.validate();
    require(!support.empty(), "train: empty support set");
    require(!dev.empty(), "train: empty dev set");

    std::vector<std::string> texts;
    texts.reserve(support.size());
    for (const Document& d : support) {
        texts.push_back(d.text);
    }
    Model model;
    model.vocab = Vocab::build(texts, h.depth());

    Rng rng(cfg.seed);
    model.encoder = EncoderParams::init(model.vocab.size(), h.depth(), cfg.hidden, cfg.dropout, rng);
    model.head = init_head(h, model.encoder.embed, model.vocab, cfg.loss.mode);

    std::vector<TrainExample> examples;
    examples.reserve(support.size());
    for (const Document& d : support) {
        examples.push_back(make_example(d, h, model.vocab, cfg.truncate_length));
    }

    const int n = static_cast<int>(examples.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    AdamConfig adam_cfg;
    adam_cfg.lr_encoder = cfg.lr;
    adam_cfg.lr_head = cfg.verbalizer_lr;
    adam_cfg.warmup_steps = cfg.warmup_steps;
    adam_cfg.total_steps = cfg.epochs * steps_per_epoch;
    Adam adam(model.encoder, model.head, adam_cfg);

    TrainResult result;
    result.best_metric = -1.0;
    int epochs_since_best = 0;

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        order[static_cast<std::size_t>(i)] = i;
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        EpochLog log;
        log.epoch = epoch;
        double weight_sum = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            std::vector<TrainExample> batch;
            batch.reserve(static_cast<std::size_t>(end - start));
            for (int i = start; i < end; ++i) {
                batch.push_back(examples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
            }
            BatchEval ev;
            try {
                ev = forward_batch(model.encoder, model.head, h, batch, cfg.loss, rng,
                                   /*train_mode=*/true);
            } catch (const Error& e) {
                fail("train: epoch " + std::to_string(epoch) + ", batch starting at doc " +
                     std::to_string(start) + ": " + e.what());
            }
            const Gradients grads = backward_batch(model.encoder, model.head, h, batch, cfg.loss, ev);
            adam.step(model.encoder, model.head, grads);

            const double w = static_cast<double>(end - start);
            log.loss_c += w * ev.loss_c;
            log.loss_hcc += w * ev.loss_hcc;
            log.loss_fhc += w * ev.loss_fhc;
            log.loss_total += w * ev.total;
            weight_sum += w;
        }
        log.loss_c /= weight_sum;
        log.loss_hcc /= weight_sum;
        log.loss_fhc /= weight_sum;
        log.loss_total /= weight_sum;
        log.lr = adam.current_lr_encoder();

        log.dev = evaluate_model(model, h, dev, cfg);
        const double metric = pick_metric(log.dev, cfg.early_metric);
        if (metric > result.best_metric) {
            result.best_metric = metric;
            result.best_epoch = epoch;
            result.best = model;
            epochs_since_best = 0;
            log.best = true;
        } else {
            ++epochs_since_best;
        }
        result.log.push_back(std::move(log));
        if (epochs_since_best >= cfg.patience) {
            break;
        }
    }
    require(result.best_epoch > 0, "train: no epoch completed");
    return result;
}

}  // namespace hierverb
