#pragma once

// Prompt-template wrapping, a whitespace tokenizer with a fixed reserved
// vocabulary, and the small differentiable reference encoder that turns a
// wrapped input into one hidden vector per mask slot.
//
// The encoder is mean-pooled token embeddings with inverted dropout,
// followed by a per-depth affine map and tanh. It stands in for a large
// masked-LM encoder behind the same contract: WrappedInput in, one finite
// r-dimensional vector per depth out, with exact gradients.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "hierverb/common.hpp"

namespace hierverb {

inline constexpr int kDefaultTruncateLength = 512;

// "[CLS] It was 1 level:[MASK] ... D level:[MASK]. <text> [SEP]"
inline std::string wrap_template(const std::string& text, int depth) {
    require(depth >= 1, "wrap_template: depth must be >= 1");
    std::string out = "[CLS] It was";
    for (int d = 1; d <= depth; ++d) {
        out += " " + std::to_string(d) + " level:[MASK]";
    }
    out += ". " + text + " [SEP]";
    return out;
}

// Lowercase whitespace split; a trailing period becomes its own token and the
// glued "level:[MASK]" template piece splits into "level:" plus the mask.
inline std::vector<std::string> split_pieces(const std::string& text) {
    std::string lower;
    lower.reserve(text.size());
    for (char c : text) {
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }

    std::vector<std::string> out;
    auto emit = [&](auto&& self, const std::string& piece) -> void {
        if (piece.empty()) {
            return;
        }
        if (piece.size() > 1 && piece.back() == '.') {
            self(self, piece.substr(0, piece.size() - 1));
            out.push_back(".");
            return;
        }
        if (piece == "level:[mask]") {
            out.push_back("level:");
            out.push_back("[mask]");
            return;
        }
        out.push_back(piece);
    };

    std::string cur;
    for (char c : lower) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            emit(emit, cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    emit(emit, cur);
    return out;
}

struct Vocab {
    static constexpr int kCls = 0;
    static constexpr int kSep = 1;
    static constexpr int kMask = 2;
    static constexpr int kUnk = 3;

    std::vector<std::string> tokens;  // id -> token
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(tokens.size()); }

    int lookup(const std::string& tok) const {
        auto it = index.find(tok);
        return it == index.end() ? kUnk : it->second;
    }

    void add(const std::string& tok) {
        if (index.find(tok) == index.end()) {
            index[tok] = static_cast<int>(tokens.size());
            tokens.push_back(tok);
        }
    }

    // Reserved ids first, then the template literals, then the corpus tokens
    // in sorted order so vocab construction is reproducible.
    static Vocab build(const std::vector<std::string>& texts, int depth) {
        Vocab v;
        v.add("[cls]");
        v.add("[sep]");
        v.add("[mask]");
        v.add("[unk]");
        v.add("it");
        v.add("was");
        v.add("level:");
        v.add(".");
        for (int d = 1; d <= depth; ++d) {
            v.add(std::to_string(d));
        }
        std::vector<std::string> corpus;
        for (const std::string& t : texts) {
            for (std::string& piece : split_pieces(t)) {
                corpus.push_back(std::move(piece));
            }
        }
        std::sort(corpus.begin(), corpus.end());
        corpus.erase(std::unique(corpus.begin(), corpus.end()), corpus.end());
        for (const std::string& tok : corpus) {
            v.add(tok);
        }
        return v;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (int id = 0; id < size(); ++id) {
            j[tokens[static_cast<std::size_t>(id)]] = id;
        }
        return j;
    }

    static Vocab from_json(const nlohmann::json& j) {
        Vocab v;
        v.tokens.resize(j.size());
        for (auto it = j.begin(); it != j.end(); ++it) {
            const int id = it.value().get<int>();
            require(id >= 0 && id < static_cast<int>(j.size()), "vocab: ids not dense");
            v.tokens[static_cast<std::size_t>(id)] = it.key();
            v.index[it.key()] = id;
        }
        return v;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        require(out.good(), "vocab: cannot write '" + path + "'");
        out << to_json().dump(2) << '\n';
    }

    static Vocab load(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), "vocab: cannot open '" + path + "'");
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

struct WrappedInput {
    std::vector<int> ids;
    std::vector<int> mask_positions;  // one per depth, in depth order
    int content_begin = 0;            // [content_begin, content_end) holds the original text
    int content_end = 0;

    int content_size() const { return content_end - content_begin; }
};

inline WrappedInput tokenize(const Vocab& vocab, const std::string& wrapped, int depth,
                             int truncate_length = kDefaultTruncateLength) {
    const int head_len = 4 + 3 * depth;  // [cls] it was + (digit level: [mask]) x depth + '.'
    require(truncate_length >= head_len + 1, "tokenize: truncate_length too small for the template");

    WrappedInput out;
    for (const std::string& piece : split_pieces(wrapped)) {
        int id;
        if (piece == "[cls]") {
            id = Vocab::kCls;
        } else if (piece == "[sep]") {
            id = Vocab::kSep;
        } else if (piece == "[mask]") {
            id = Vocab::kMask;
        } else {
            id = vocab.lookup(piece);
        }
        if (id == Vocab::kMask && static_cast<int>(out.mask_positions.size()) < depth) {
            out.mask_positions.push_back(static_cast<int>(out.ids.size()));
        }
        out.ids.push_back(id);
    }

    // Masks live in the template head, ahead of any truncation point.
    require(static_cast<int>(out.mask_positions.size()) == depth, "tokenize: mask slot missing");
    require(out.mask_positions.back() < head_len, "tokenize: mask outside template head");

    if (static_cast<int>(out.ids.size()) > truncate_length) {
        out.ids.resize(static_cast<std::size_t>(truncate_length - 1));
        out.ids.push_back(Vocab::kSep);
    }
    out.content_begin = head_len;
    out.content_end = static_cast<int>(out.ids.size()) - 1;
    return out;
}

inline WrappedInput wrap_and_tokenize(const Vocab& vocab, const std::string& text, int depth,
                                      int truncate_length = kDefaultTruncateLength) {
    return tokenize(vocab, wrap_template(text, depth), depth, truncate_length);
}

// ---------------------------------------------------------------------------
// Reference encoder
// ---------------------------------------------------------------------------

struct EncoderParams {
    int hidden = 32;         // r
    double dropout = 0.1;    // rho
    Mat embed;               // vocab x r
    std::vector<Mat> proj;   // per depth: r x r
    std::vector<Vec> shift;  // per depth: r

    int depth() const { return static_cast<int>(proj.size()); }

    static EncoderParams init(int vocab_size, int depth, int hidden, double dropout, Rng& rng) {
        require(vocab_size > 0 && depth >= 1 && hidden >= 1, "encoder: bad shape");
        require(dropout >= 0.0 && dropout < 1.0, "encoder: dropout must be in [0,1)");
        EncoderParams p;
        p.hidden = hidden;
        p.dropout = dropout;
        p.embed = Mat(vocab_size, hidden);
        for (double& x : p.embed.data) {
            x = rng.uniform(-0.1, 0.1);
        }
        p.proj.resize(static_cast<std::size_t>(depth));
        p.shift.resize(static_cast<std::size_t>(depth));
        for (int d = 0; d < depth; ++d) {
            Mat& a = p.proj[static_cast<std::size_t>(d)];
            a = Mat(hidden, hidden);
            for (double& x : a.data) {
                x = rng.uniform(-0.1, 0.1);
            }
            for (int i = 0; i < hidden; ++i) {
                a(i, i) += 1.0;  // keeps tanh near its linear range at init
            }
            Vec& u = p.shift[static_cast<std::size_t>(d)];
            u.assign(static_cast<std::size_t>(hidden), 0.0);
            for (double& x : u) {
                x = rng.uniform(-0.1, 0.1);
            }
        }
        return p;
    }
};

struct MaskHiddenStates {
    std::vector<Vec> h;  // one vector per depth

    int depth() const { return static_cast<int>(h.size()); }
    int dim() const { return h.empty() ? 0 : static_cast<int>(h.front().size()); }
};

// Everything the backward pass needs from one forward call.
struct EncodeTrace {
    Mat drop;    // content_size x r inverted-dropout factors; 0x0 when inactive
    Vec pooled;  // mean of (dropped) content embeddings
    MaskHiddenStates states;

    bool dropped() const { return drop.rows > 0; }
};

inline EncodeTrace encode_traced(const EncoderParams& p, const WrappedInput& in, Rng& rng,
                                 bool train_mode) {
    const int m = in.content_size();
    require(m > 0, "encode: empty content span (document has no tokens)");
    const int r = p.hidden;

    EncodeTrace tr;
    const bool use_drop = train_mode && p.dropout > 0.0;
    if (use_drop) {
        tr.drop = Mat(m, r);
        const double keep_scale = 1.0 / (1.0 - p.dropout);
        for (int k = 0; k < m; ++k) {
            for (int c = 0; c < r; ++c) {
                tr.drop(k, c) = rng.uniform01() >= p.dropout ? keep_scale : 0.0;
            }
        }
    }

    tr.pooled.assign(static_cast<std::size_t>(r), 0.0);
    for (int k = 0; k < m; ++k) {
        const int tok = in.ids[static_cast<std::size_t>(in.content_begin + k)];
        for (int c = 0; c < r; ++c) {
            const double e = p.embed(tok, c);
            tr.pooled[static_cast<std::size_t>(c)] += use_drop ? tr.drop(k, c) * e : e;
        }
    }
    for (double& x : tr.pooled) {
        x /= m;
    }

    tr.states.h.resize(static_cast<std::size_t>(p.depth()));
    for (int d = 0; d < p.depth(); ++d) {
        Vec z = matvec(p.proj[static_cast<std::size_t>(d)], tr.pooled);
        axpy(z, p.shift[static_cast<std::size_t>(d)]);
        for (double& x : z) {
            x = std::tanh(x);
        }
        tr.states.h[static_cast<std::size_t>(d)] = std::move(z);
    }
    return tr;
}

inline MaskHiddenStates encode(const EncoderParams& p, const WrappedInput& in, Rng& rng,
                               bool train_mode) {
    return encode_traced(p, in, rng, train_mode).states;
}

// Two independent dropout draws over the same input; the pair feeds the
// contrastive objective.
inline std::pair<EncodeTrace, EncodeTrace> encode_two_views_traced(const EncoderParams& p,
                                                                   const WrappedInput& in,
                                                                   Rng& rng) {
    EncodeTrace first = encode_traced(p, in, rng, /*train_mode=*/true);
    EncodeTrace second = encode_traced(p, in, rng, /*train_mode=*/true);
    return {std::move(first), std::move(second)};
}

inline std::pair<MaskHiddenStates, MaskHiddenStates> encode_two_views(const EncoderParams& p,
                                                                      const WrappedInput& in,
                                                                      Rng& rng) {
    auto [a, b] = encode_two_views_traced(p, in, rng);
    return {std::move(a.states), std::move(b.states)};
}

// Backprop through one encode call. dH holds dL/dh per depth; contributions
// are accumulated into d_embed/d_proj/d_shift.
inline void encoder_backward(const EncoderParams& p, const WrappedInput& in, const EncodeTrace& tr,
                             const std::vector<Vec>& dH, Mat& d_embed, std::vector<Mat>& d_proj,
                             std::vector<Vec>& d_shift) {
    const int r = p.hidden;
    const int m = in.content_size();
    Vec d_pooled(static_cast<std::size_t>(r), 0.0);

    for (int d = 0; d < p.depth(); ++d) {
        const Vec& h = tr.states.h[static_cast<std::size_t>(d)];
        const Vec& dh = dH[static_cast<std::size_t>(d)];
        bool any = false;
        for (double x : dh) {
            if (x != 0.0) {
                any = true;
                break;
            }
        }
        if (!any) {
            continue;
        }
        Vec dz(static_cast<std::size_t>(r));
        for (int c = 0; c < r; ++c) {
            const double hc = h[static_cast<std::size_t>(c)];
            dz[static_cast<std::size_t>(c)] = dh[static_cast<std::size_t>(c)] * (1.0 - hc * hc);
        }
        add_outer(d_proj[static_cast<std::size_t>(d)], dz, tr.pooled);
        axpy(d_shift[static_cast<std::size_t>(d)], dz);
        axpy(d_pooled, tmatvec(p.proj[static_cast<std::size_t>(d)], dz));
    }

    const double inv_m = 1.0 / m;
    for (int k = 0; k < m; ++k) {
        const int tok = in.ids[static_cast<std::size_t>(in.content_begin + k)];
        for (int c = 0; c < r; ++c) {
            const double factor = tr.dropped() ? tr.drop(k, c) : 1.0;
            d_embed(tok, c) += inv_m * factor * d_pooled[static_cast<std::size_t>(c)];
        }
    }
}

}  // namespace hierverb
