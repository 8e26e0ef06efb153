#pragma once

// Training objectives and their exact gradients:
//   - per-depth classification loss (cross-entropy or per-label BCE),
//   - the constraint chain: child probabilities mixed upward into parents
//     before re-applying the classification loss on the propagated layers,
//   - the flat hierarchical contrastive loss over two stochastic encodings
//     per document, with per-depth positive masks and depth weighting.
//
// The contrastive formula is shipped in two algebraically equal forms (the
// log(exp/exp) expression and its collapsed difference) plus an InfoNCE-style
// variant selected by config.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hierverb/common.hpp"
#include "hierverb/dataset.hpp"
#include "hierverb/encoding.hpp"
#include "hierverb/hierarchy.hpp"
#include "hierverb/verbalizer.hpp"

namespace hierverb {

enum class FhcVariant { AsWritten, InfoNce };
enum class HccSource { Raw, Recursive };

inline const char* to_string(FhcVariant v) {
    return v == FhcVariant::AsWritten ? "as_written" : "infonce";
}
inline const char* to_string(HccSource s) { return s == HccSource::Raw ? "raw" : "recursive"; }

inline FhcVariant fhc_variant_from_string(const std::string& s) {
    if (s == "as_written") {
        return FhcVariant::AsWritten;
    }
    if (s == "infonce") {
        return FhcVariant::InfoNce;
    }
    fail("loss.fhc_variant must be as_written or infonce, got '" + s + "'");
}

inline HccSource hcc_source_from_string(const std::string& s) {
    if (s == "raw") {
        return HccSource::Raw;
    }
    if (s == "recursive") {
        return HccSource::Recursive;
    }
    fail("loss.hcc_source must be raw or recursive, got '" + s + "'");
}

struct LossConfig {
    double lambda1 = 1.0;   // constraint-chain weight
    double lambda2 = 1e-2;  // contrastive weight
    double alpha = 1.0;     // depth-weighting exponent
    double beta = 1.0;      // descendant-constraint mix
    double tau = 0.05;      // temperature (infonce variant only)
    Mode mode = Mode::SinglePath;
    FhcVariant fhc_variant = FhcVariant::AsWritten;
    HccSource hcc_source = HccSource::Raw;
    bool fhc_include_self = true;

    void validate() const {
        require(lambda1 >= 0.0 && lambda2 >= 0.0, "loss: lambda1/lambda2 must be >= 0");
        require(alpha >= 0.0, "loss: alpha must be >= 0");
        require(beta >= 0.0 && beta <= 1.0, "loss: beta must be in [0,1]");
        require(tau > 0.0, "loss: tau must be > 0");
    }
};

// Gold labels per depth as local (within-layer) indices, sorted ascending.
using DepthLabels = std::vector<std::vector<int>>;

inline DepthLabels gold_depth_labels(const std::set<int>& labels, const Hierarchy& h) {
    DepthLabels gold(static_cast<std::size_t>(h.depth()));
    for (int id : labels) {
        gold[static_cast<std::size_t>(h.depth_of(id) - 1)].push_back(h.local_index(id));
    }
    for (auto& layer : gold) {
        std::sort(layer.begin(), layer.end());
    }
    return gold;
}

// ---------------------------------------------------------------------------
// Classification loss
// ---------------------------------------------------------------------------

inline double classification_loss(const LayerProbabilities& probs, const DepthLabels& gold,
                                  Mode mode) {
    require(probs.mode == mode, "classification_loss: mode mismatch");
    require(gold.size() >= probs.p.size(), "classification_loss: gold depth mismatch");
    double loss = 0.0;
    for (std::size_t d = 0; d < probs.p.size(); ++d) {
        const Vec& p = probs.p[d];
        const auto& g = gold[d];
        if (mode == Mode::SinglePath) {
            require(g.size() == 1, "classification_loss: single_path needs exactly one gold label at depth " +
                                       std::to_string(d + 1));
            loss += -std::log(clamp_prob(p[static_cast<std::size_t>(g.front())]));
        } else {
            std::size_t gi = 0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const bool y = gi < g.size() && g[gi] == static_cast<int>(j);
                if (y) {
                    ++gi;
                }
                const double pc = clamp_prob(p[j]);
                loss += y ? -std::log(pc) : -std::log(1.0 - pc);
            }
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Constraint chain
// ---------------------------------------------------------------------------

// Mixes child probabilities into each parent: (1-beta) * own + beta * sum of
// children. "raw" uses the next layer's probabilities as produced; "recursive"
// feeds already-propagated values bottom-up from the leaf layer. Returns the
// propagated layers 1..D-1 only; the leaf layer is never a target.
inline LayerProbabilities hcc_propagate(const LayerProbabilities& probs, const Hierarchy& h,
                                        double beta, HccSource source) {
    require(beta >= 0.0 && beta <= 1.0, "hcc_propagate: beta must be in [0,1]");
    require(probs.depth() == h.depth(), "hcc_propagate: depth mismatch");
    const int depth = h.depth();

    LayerProbabilities out;
    out.mode = probs.mode;
    if (depth <= 1) {
        return out;
    }
    out.p.resize(static_cast<std::size_t>(depth - 1));

    Vec lower = probs.p.back();  // recursive source: propagated values so far
    for (int d = depth - 2; d >= 0; --d) {
        const auto& layer = h.layers()[static_cast<std::size_t>(d)];
        const Vec& own = probs.p[static_cast<std::size_t>(d)];
        const Vec& child_src =
            source == HccSource::Raw ? probs.p[static_cast<std::size_t>(d + 1)] : lower;
        Vec mixed(own.size());
        for (std::size_t j = 0; j < layer.size(); ++j) {
            double child_sum = 0.0;  // childless labels contribute an empty sum
            for (int c : h.children(layer[j])) {
                child_sum += child_src[static_cast<std::size_t>(h.local_index(c))];
            }
            mixed[j] = (1.0 - beta) * own[j] + beta * child_sum;
        }
        out.p[static_cast<std::size_t>(d)] = mixed;
        lower = std::move(mixed);
    }
    return out;
}

inline double hcc_loss(const LayerProbabilities& propagated, const DepthLabels& gold, Mode mode) {
    if (propagated.p.empty()) {
        return 0.0;  // single-layer taxonomy: nothing is propagated
    }
    return classification_loss(propagated, gold, mode);
}

// ---------------------------------------------------------------------------
// Flat hierarchical contrastive loss
// ---------------------------------------------------------------------------

// M(a,b) = 1 iff views a and b share a gold label at this depth. Views 0..N-1
// are the first encodings of the batch documents, N..2N-1 their second ones.
inline Mat lattice_matrix(const std::vector<DepthLabels>& batch_gold, int depth_index) {
    const int n = static_cast<int>(batch_gold.size());
    const int views = 2 * n;
    Mat m(views, views);
    auto labels = [&](int v) -> const std::vector<int>& {
        return batch_gold[static_cast<std::size_t>(v % n)][static_cast<std::size_t>(depth_index)];
    };
    for (int a = 0; a < views; ++a) {
        for (int b = a; b < views; ++b) {
            const auto& la = labels(a);
            const auto& lb = labels(b);
            bool shared = false;
            std::size_t i = 0;
            std::size_t j = 0;
            while (i < la.size() && j < lb.size()) {
                if (la[i] == lb[j]) {
                    shared = true;
                    break;
                }
                if (la[i] < lb[j]) {
                    ++i;
                } else {
                    ++j;
                }
            }
            m(a, b) = shared ? 1.0 : 0.0;
            m(b, a) = m(a, b);
        }
    }
    return m;
}

// 2^{-(D-d) * alpha} for 1-based depth d; deeper layers weigh more.
inline double fhc_layer_weight(int d, int depth, double alpha) {
    return std::pow(2.0, -static_cast<double>(depth - d) * alpha);
}

namespace detail {

inline constexpr double kNormFloor = 1e-12;

struct CosineCache {
    std::vector<Vec> unit;
    std::vector<double> norm;
    Mat s;
};

inline CosineCache cosine_cache(const std::vector<MaskHiddenStates>& views, int depth_index) {
    const int v = static_cast<int>(views.size());
    CosineCache c;
    c.unit.resize(static_cast<std::size_t>(v));
    c.norm.resize(static_cast<std::size_t>(v));
    for (int a = 0; a < v; ++a) {
        const Vec& h = views[static_cast<std::size_t>(a)].h[static_cast<std::size_t>(depth_index)];
        const double n = norm2(h);
        require(n >= kNormFloor, "fhc: zero-norm hidden vector at depth " + std::to_string(depth_index + 1));
        Vec u = h;
        for (double& x : u) {
            x /= n;
        }
        c.unit[static_cast<std::size_t>(a)] = std::move(u);
        c.norm[static_cast<std::size_t>(a)] = n;
    }
    c.s = Mat(v, v);
    for (int a = 0; a < v; ++a) {
        for (int b = a; b < v; ++b) {
            const double s = dot(c.unit[static_cast<std::size_t>(a)], c.unit[static_cast<std::size_t>(b)]);
            c.s(a, b) = s;
            c.s(b, a) = s;
        }
    }
    return c;
}

// Coefficient collected by layer u once the per-depth weights of all depths
// d >= u are folded together (u, d 1-based).
inline double fhc_layer_coeff(int u, int depth, double alpha) {
    double c = 0.0;
    for (int d = u; d <= depth; ++d) {
        c += fhc_layer_weight(d, depth, alpha);
    }
    return c;
}

}  // namespace detail

// Collapsed form: for every layer, sum of similarities masked to label-sharing
// pairs minus the unmasked sum, scaled by the folded depth weights.
inline double fhc_loss_as_written(const std::vector<MaskHiddenStates>& views,
                                  const std::vector<Mat>& lattice, double alpha,
                                  bool include_self) {
    const int v = static_cast<int>(views.size());
    require(v >= 2 && v % 2 == 0, "fhc: need 2N views");
    const int n = v / 2;
    const int depth = views.front().depth();
    require(static_cast<int>(lattice.size()) == depth, "fhc: lattice depth mismatch");

    double loss = 0.0;
    for (int u = 0; u < depth; ++u) {
        const detail::CosineCache cache = detail::cosine_cache(views, u);
        const Mat& m = lattice[static_cast<std::size_t>(u)];
        double acc = 0.0;
        for (int a = 0; a < v; ++a) {
            for (int b = 0; b < v; ++b) {
                if (!include_self && a == b) {
                    continue;
                }
                acc += cache.s(a, b) * (m(a, b) - 1.0);
            }
        }
        loss += detail::fhc_layer_coeff(u + 1, depth, alpha) * acc;
    }
    return -loss / (static_cast<double>(n) * n * depth * depth);
}

// The same quantity computed literally as log(exp(masked sum) / exp(full sum))
// per (d, u, n); kept as an independent route for the equivalence check.
inline double fhc_loss_literal(const std::vector<MaskHiddenStates>& views,
                               const std::vector<Mat>& lattice, double alpha, bool include_self) {
    const int v = static_cast<int>(views.size());
    require(v >= 2 && v % 2 == 0, "fhc: need 2N views");
    const int n = v / 2;
    const int depth = views.front().depth();

    std::vector<detail::CosineCache> caches;
    caches.reserve(static_cast<std::size_t>(depth));
    for (int u = 0; u < depth; ++u) {
        caches.push_back(detail::cosine_cache(views, u));
    }

    double loss = 0.0;
    for (int d = 1; d <= depth; ++d) {
        const double w = fhc_layer_weight(d, depth, alpha);
        for (int u = 1; u <= d; ++u) {
            const detail::CosineCache& cache = caches[static_cast<std::size_t>(u - 1)];
            const Mat& m = lattice[static_cast<std::size_t>(u - 1)];
            for (int a = 0; a < v; ++a) {
                double masked = 0.0;
                double full = 0.0;
                for (int b = 0; b < v; ++b) {
                    if (!include_self && a == b) {
                        continue;
                    }
                    masked += cache.s(a, b) * m(a, b);
                    full += cache.s(a, b);
                }
                loss += w * std::log(std::exp(masked) / std::exp(full));
            }
        }
    }
    return -loss / (static_cast<double>(n) * n * depth * depth);
}

// Temperature-normalized variant: per view and layer, positives are the other
// views sharing a label there; each term is an average -log softmax score.
inline double fhc_loss_infonce(const std::vector<MaskHiddenStates>& views,
                               const std::vector<Mat>& lattice, double alpha, double tau) {
    const int v = static_cast<int>(views.size());
    require(v >= 2 && v % 2 == 0, "fhc: need 2N views");
    const int n = v / 2;
    const int depth = views.front().depth();

    double loss = 0.0;
    for (int u = 0; u < depth; ++u) {
        const detail::CosineCache cache = detail::cosine_cache(views, u);
        const Mat& m = lattice[static_cast<std::size_t>(u)];
        const double coeff = detail::fhc_layer_coeff(u + 1, depth, alpha);
        for (int a = 0; a < v; ++a) {
            int positives = 0;
            double mx = -std::numeric_limits<double>::infinity();
            for (int b = 0; b < v; ++b) {
                if (b == a) {
                    continue;
                }
                if (m(a, b) > 0.5) {
                    ++positives;
                }
                mx = std::max(mx, cache.s(a, b) / tau);
            }
            if (positives == 0) {
                continue;
            }
            double z = 0.0;
            for (int b = 0; b < v; ++b) {
                if (b == a) {
                    continue;
                }
                z += std::exp(cache.s(a, b) / tau - mx);
            }
            const double log_z = mx + std::log(z);
            double term = 0.0;
            for (int b = 0; b < v; ++b) {
                if (b == a || m(a, b) <= 0.5) {
                    continue;
                }
                term += -(cache.s(a, b) / tau - log_z);
            }
            loss += coeff * term / positives;
        }
    }
    return loss / (static_cast<double>(n) * n * depth * depth);
}

inline double fhc_loss(const std::vector<MaskHiddenStates>& views, const std::vector<Mat>& lattice,
                       const LossConfig& cfg) {
    if (cfg.fhc_variant == FhcVariant::AsWritten) {
        return fhc_loss_as_written(views, lattice, cfg.alpha, cfg.fhc_include_self);
    }
    return fhc_loss_infonce(views, lattice, cfg.alpha, cfg.tau);
}

inline double total_loss(double loss_c, double loss_hcc, double loss_fhc, double lambda1,
                         double lambda2) {
    return loss_c + lambda1 * loss_hcc + lambda2 * loss_fhc;
}

// ---------------------------------------------------------------------------
// Batched forward / backward
// ---------------------------------------------------------------------------

struct TrainExample {
    WrappedInput input;
    DepthLabels gold;
};

inline TrainExample make_example(const Document& doc, const Hierarchy& h, const Vocab& vocab,
                                 int truncate_length = kDefaultTruncateLength) {
    TrainExample ex;
    ex.input = wrap_and_tokenize(vocab, doc.text, h.depth(), truncate_length);
    ex.gold = gold_depth_labels(doc.labels, h);
    return ex;
}

struct BatchEval {
    double loss_c = 0.0;
    double loss_hcc = 0.0;
    double loss_fhc = 0.0;
    double total = 0.0;
    std::vector<EncodeTrace> first;
    std::vector<EncodeTrace> second;
    std::vector<std::vector<Vec>> logits;        // per doc, first view
    std::vector<LayerProbabilities> probs;       // per doc
    std::vector<LayerProbabilities> propagated;  // per doc (layers 1..D-1)
    std::vector<Mat> lattice;                    // per depth
};

inline BatchEval forward_batch(const EncoderParams& enc, const VerbalizerHead& head,
                               const Hierarchy& h, const std::vector<TrainExample>& batch,
                               const LossConfig& cfg, Rng& rng, bool train_mode) {
    require(!batch.empty(), "forward_batch: empty batch");
    cfg.validate();
    const int n = static_cast<int>(batch.size());
    const int depth = h.depth();

    BatchEval ev;
    ev.first.reserve(static_cast<std::size_t>(n));
    ev.second.reserve(static_cast<std::size_t>(n));
    for (const TrainExample& ex : batch) {
        ev.first.push_back(encode_traced(enc, ex.input, rng, train_mode));
        ev.second.push_back(encode_traced(enc, ex.input, rng, train_mode));
    }

    std::vector<DepthLabels> batch_gold;
    batch_gold.reserve(static_cast<std::size_t>(n));
    for (const TrainExample& ex : batch) {
        batch_gold.push_back(ex.gold);
    }

    for (int i = 0; i < n; ++i) {
        ev.logits.push_back(layer_logits(head, ev.first[static_cast<std::size_t>(i)].states));
        ev.probs.push_back(probabilities(ev.logits.back(), cfg.mode));
        ev.loss_c += classification_loss(ev.probs.back(), batch[static_cast<std::size_t>(i)].gold, cfg.mode);
        if (depth > 1) {
            ev.propagated.push_back(hcc_propagate(ev.probs.back(), h, cfg.beta, cfg.hcc_source));
            ev.loss_hcc +=
                hcc_loss(ev.propagated.back(), batch[static_cast<std::size_t>(i)].gold, cfg.mode);
        }
    }
    ev.loss_c /= n;
    ev.loss_hcc /= n;

    std::vector<MaskHiddenStates> views;
    views.reserve(static_cast<std::size_t>(2 * n));
    for (int i = 0; i < n; ++i) {
        views.push_back(ev.first[static_cast<std::size_t>(i)].states);
    }
    for (int i = 0; i < n; ++i) {
        views.push_back(ev.second[static_cast<std::size_t>(i)].states);
    }
    for (int d = 0; d < depth; ++d) {
        ev.lattice.push_back(lattice_matrix(batch_gold, d));
    }
    ev.loss_fhc = fhc_loss(views, ev.lattice, cfg);

    ev.total = total_loss(ev.loss_c, ev.loss_hcc, ev.loss_fhc, cfg.lambda1, cfg.lambda2);
    if (!std::isfinite(ev.total)) {
        std::string term = !std::isfinite(ev.loss_c)     ? "classification"
                           : !std::isfinite(ev.loss_hcc) ? "constraint-chain"
                                                         : "contrastive";
        fail("forward_batch: non-finite " + term + " loss");
    }
    return ev;
}

struct Gradients {
    Mat embed;
    std::vector<Mat> proj;
    std::vector<Vec> shift;
    std::vector<Mat> weight;
    std::vector<Vec> bias;

    static Gradients zeros(const EncoderParams& enc, const VerbalizerHead& head) {
        Gradients g;
        g.embed = Mat(enc.embed.rows, enc.embed.cols);
        for (const Mat& a : enc.proj) {
            g.proj.emplace_back(a.rows, a.cols);
        }
        for (const Vec& u : enc.shift) {
            g.shift.emplace_back(u.size(), 0.0);
        }
        for (const Mat& w : head.weight) {
            g.weight.emplace_back(w.rows, w.cols);
        }
        for (const Vec& b : head.bias) {
            g.bias.emplace_back(b.size(), 0.0);
        }
        return g;
    }

    bool finite() const {
        if (!all_finite(embed)) {
            return false;
        }
        for (const Mat& m : proj) {
            if (!all_finite(m)) {
                return false;
            }
        }
        for (const Vec& v : shift) {
            if (!all_finite(v)) {
                return false;
            }
        }
        for (const Mat& m : weight) {
            if (!all_finite(m)) {
                return false;
            }
        }
        for (const Vec& v : bias) {
            if (!all_finite(v)) {
                return false;
            }
        }
        return true;
    }
};

namespace detail {

// dL/dp for -log(clamp(p)); zero where the clamp is active so gradients agree
// with what the clamped loss actually does.
inline double d_neglog(double p) {
    return (p > kProbEps && p < 1.0 - kProbEps) ? -1.0 / p : 0.0;
}

inline double d_bce(double p, bool y) {
    if (p <= kProbEps || p >= 1.0 - kProbEps) {
        return 0.0;
    }
    return y ? -1.0 / p : 1.0 / (1.0 - p);
}

// Accumulates scale * dLoss/dp for a classification-style loss on `probs`.
inline void add_class_dp(std::vector<Vec>& gp, const std::vector<Vec>& probs,
                         const DepthLabels& gold, Mode mode, double scale) {
    for (std::size_t d = 0; d < probs.size(); ++d) {
        const Vec& p = probs[d];
        const auto& g = gold[d];
        if (mode == Mode::SinglePath) {
            const auto j = static_cast<std::size_t>(g.front());
            gp[d][j] += scale * d_neglog(p[j]);
        } else {
            std::size_t gi = 0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                const bool y = gi < g.size() && g[gi] == static_cast<int>(j);
                if (y) {
                    ++gi;
                }
                gp[d][j] += scale * d_bce(p[j], y);
            }
        }
    }
}

// dp -> dlogits through softmax or element-wise sigmoid.
inline Vec dp_to_dlogits(const Vec& p, const Vec& gp, Mode mode) {
    Vec dl(p.size());
    if (mode == Mode::SinglePath) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            s += gp[j] * p[j];
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            dl[j] = p[j] * (gp[j] - s);
        }
    } else {
        for (std::size_t j = 0; j < p.size(); ++j) {
            dl[j] = gp[j] * p[j] * (1.0 - p[j]);
        }
    }
    return dl;
}

// Scatter beta * g (over layer d) down to the child slots in layer d+1.
inline Vec scatter_to_children(const Vec& g, const Hierarchy& h, int depth_index, double beta) {
    const auto& layer = h.layers()[static_cast<std::size_t>(depth_index)];
    const auto& next = h.layers()[static_cast<std::size_t>(depth_index + 1)];
    Vec out(next.size(), 0.0);
    for (std::size_t j = 0; j < layer.size(); ++j) {
        const double gj = beta * g[j];
        if (gj == 0.0) {
            continue;
        }
        for (int c : h.children(layer[j])) {
            out[static_cast<std::size_t>(h.local_index(c))] += gj;
        }
    }
    return out;
}

inline void add_cosine_pair_grad(std::vector<std::vector<Vec>>& d_hidden, const CosineCache& cache,
                                 int u, int a, int b, double g) {
    if (g == 0.0) {
        return;
    }
    const Vec& ua = cache.unit[static_cast<std::size_t>(a)];
    const Vec& ub = cache.unit[static_cast<std::size_t>(b)];
    const double s = cache.s(a, b);
    Vec& da = d_hidden[static_cast<std::size_t>(a)][static_cast<std::size_t>(u)];
    Vec& db = d_hidden[static_cast<std::size_t>(b)][static_cast<std::size_t>(u)];
    const double inv_na = 1.0 / cache.norm[static_cast<std::size_t>(a)];
    const double inv_nb = 1.0 / cache.norm[static_cast<std::size_t>(b)];
    for (std::size_t c = 0; c < ua.size(); ++c) {
        da[c] += g * (ub[c] - s * ua[c]) * inv_na;
        db[c] += g * (ua[c] - s * ub[c]) * inv_nb;
    }
}

}  // namespace detail

inline Gradients backward_batch(const EncoderParams& enc, const VerbalizerHead& head,
                                const Hierarchy& h, const std::vector<TrainExample>& batch,
                                const LossConfig& cfg, const BatchEval& ev) {
    const int n = static_cast<int>(batch.size());
    const int depth = h.depth();
    const int r = enc.hidden;
    const double inv_n = 1.0 / n;

    Gradients grads = Gradients::zeros(enc, head);

    // dL/dh per view per depth.
    std::vector<std::vector<Vec>> d_hidden(
        static_cast<std::size_t>(2 * n),
        std::vector<Vec>(static_cast<std::size_t>(depth), Vec(static_cast<std::size_t>(r), 0.0)));

    for (int i = 0; i < n; ++i) {
        const TrainExample& ex = batch[static_cast<std::size_t>(i)];
        const LayerProbabilities& probs = ev.probs[static_cast<std::size_t>(i)];

        std::vector<Vec> gp(static_cast<std::size_t>(depth));
        for (int d = 0; d < depth; ++d) {
            gp[static_cast<std::size_t>(d)].assign(probs.p[static_cast<std::size_t>(d)].size(), 0.0);
        }
        detail::add_class_dp(gp, probs.p, ex.gold, cfg.mode, inv_n);

        if (depth > 1 && cfg.lambda1 != 0.0) {
            const LayerProbabilities& prop = ev.propagated[static_cast<std::size_t>(i)];
            std::vector<Vec> ell(static_cast<std::size_t>(depth - 1));
            for (int d = 0; d < depth - 1; ++d) {
                ell[static_cast<std::size_t>(d)].assign(prop.p[static_cast<std::size_t>(d)].size(), 0.0);
            }
            detail::add_class_dp(ell, prop.p, ex.gold, cfg.mode, cfg.lambda1 * inv_n);

            if (cfg.hcc_source == HccSource::Raw) {
                for (int d = 0; d < depth - 1; ++d) {
                    const Vec& e = ell[static_cast<std::size_t>(d)];
                    Vec& own = gp[static_cast<std::size_t>(d)];
                    for (std::size_t j = 0; j < e.size(); ++j) {
                        own[j] += (1.0 - cfg.beta) * e[j];
                    }
                    axpy(gp[static_cast<std::size_t>(d + 1)],
                         detail::scatter_to_children(e, h, d, cfg.beta));
                }
            } else {
                // Bottom layer of the recursion is the raw leaf layer, so the
                // chain terminates there with a full (unmixed) contribution.
                Vec g = ell.front();
                for (int d = 0; d < depth - 1; ++d) {
                    Vec& own = gp[static_cast<std::size_t>(d)];
                    for (std::size_t j = 0; j < g.size(); ++j) {
                        own[j] += (1.0 - cfg.beta) * g[j];
                    }
                    Vec next = detail::scatter_to_children(g, h, d, cfg.beta);
                    if (d + 1 < depth - 1) {
                        axpy(next, ell[static_cast<std::size_t>(d + 1)]);
                    } else {
                        axpy(gp[static_cast<std::size_t>(depth - 1)], next);
                    }
                    g = std::move(next);
                }
            }
        }

        for (int d = 0; d < depth; ++d) {
            const Vec dl = detail::dp_to_dlogits(probs.p[static_cast<std::size_t>(d)],
                                                 gp[static_cast<std::size_t>(d)], cfg.mode);
            const Vec& hid = ev.first[static_cast<std::size_t>(i)].states.h[static_cast<std::size_t>(d)];
            add_outer(grads.weight[static_cast<std::size_t>(d)], hid, dl);
            axpy(grads.bias[static_cast<std::size_t>(d)], dl);
            axpy(d_hidden[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)],
                 matvec(head.weight[static_cast<std::size_t>(d)], dl));
        }
    }

    if (cfg.lambda2 != 0.0) {
        std::vector<MaskHiddenStates> views;
        views.reserve(static_cast<std::size_t>(2 * n));
        for (int i = 0; i < n; ++i) {
            views.push_back(ev.first[static_cast<std::size_t>(i)].states);
        }
        for (int i = 0; i < n; ++i) {
            views.push_back(ev.second[static_cast<std::size_t>(i)].states);
        }
        const int v = 2 * n;
        const double batch_norm = 1.0 / (static_cast<double>(n) * n * depth * depth);

        for (int u = 0; u < depth; ++u) {
            const detail::CosineCache cache = detail::cosine_cache(views, u);
            const Mat& m = ev.lattice[static_cast<std::size_t>(u)];
            const double coeff = detail::fhc_layer_coeff(u + 1, depth, cfg.alpha);

            if (cfg.fhc_variant == FhcVariant::AsWritten) {
                const double factor = -cfg.lambda2 * batch_norm * coeff;
                for (int a = 0; a < v; ++a) {
                    for (int b = 0; b < v; ++b) {
                        if (a == b) {
                            continue;  // the self term cancels in the masked difference
                        }
                        detail::add_cosine_pair_grad(d_hidden, cache, u, a, b,
                                                     factor * (m(a, b) - 1.0));
                    }
                }
            } else {
                const double factor = cfg.lambda2 * batch_norm * coeff / cfg.tau;
                for (int a = 0; a < v; ++a) {
                    int positives = 0;
                    double mx = -std::numeric_limits<double>::infinity();
                    for (int b = 0; b < v; ++b) {
                        if (b == a) {
                            continue;
                        }
                        if (m(a, b) > 0.5) {
                            ++positives;
                        }
                        mx = std::max(mx, cache.s(a, b) / cfg.tau);
                    }
                    if (positives == 0) {
                        continue;
                    }
                    double z = 0.0;
                    for (int b = 0; b < v; ++b) {
                        if (b == a) {
                            continue;
                        }
                        z += std::exp(cache.s(a, b) / cfg.tau - mx);
                    }
                    for (int b = 0; b < v; ++b) {
                        if (b == a) {
                            continue;
                        }
                        const double soft = std::exp(cache.s(a, b) / cfg.tau - mx) / z;
                        const double pos = m(a, b) > 0.5 ? 1.0 / positives : 0.0;
                        detail::add_cosine_pair_grad(d_hidden, cache, u, a, b,
                                                     factor * (soft - pos));
                    }
                }
            }
        }
    }

    for (int view = 0; view < 2 * n; ++view) {
        const int doc = view % n;
        const EncodeTrace& tr = view < n ? ev.first[static_cast<std::size_t>(doc)]
                                         : ev.second[static_cast<std::size_t>(doc)];
        encoder_backward(enc, batch[static_cast<std::size_t>(doc)].input, tr,
                         d_hidden[static_cast<std::size_t>(view)], grads.embed, grads.proj,
                         grads.shift);
    }

    if (!grads.finite()) {
        fail("backward_batch: non-finite gradient");
    }
    return grads;
}

}  // namespace hierverb
