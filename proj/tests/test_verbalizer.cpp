#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>

#include "hierverb/verbalizer.hpp"

using namespace hierverb;

namespace {

// "CS" -> {"computer vision", "machine learning"}; "Medical" -> {"Medicare"}.
Hierarchy small_tax() {
    return Hierarchy::from_edges({{std::nullopt, "CS"},
                                  {std::nullopt, "Medical"},
                                  {{"CS"}, "computer vision"},
                                  {{"CS"}, "machine learning"},
                                  {{"Medical"}, "Medicare"}});
}

Vocab demo_vocab(const Hierarchy& h) {
    std::vector<std::string> texts;
    for (const LabelNode& n : h.nodes()) {
        texts.push_back(n.name);
    }
    return Vocab::build(texts, h.depth());
}

Vec embed_row(const Mat& e, int token) {
    Vec out(static_cast<std::size_t>(e.cols));
    for (int c = 0; c < e.cols; ++c) {
        out[static_cast<std::size_t>(c)] = e(token, c);
    }
    return out;
}

Vec head_column(const VerbalizerHead& head, int depth_index, int col) {
    const Mat& w = head.weight[static_cast<std::size_t>(depth_index)];
    Vec out(static_cast<std::size_t>(w.rows));
    for (int r = 0; r < w.rows; ++r) {
        out[static_cast<std::size_t>(r)] = w(r, col);
    }
    return out;
}

}  // namespace

TEST_CASE("head columns average name and descendant-name tokens", "[verbalizer]") {
    const Hierarchy h = small_tax();
    const Vocab v = demo_vocab(h);
    Rng rng(1);
    EncoderParams enc = EncoderParams::init(v.size(), h.depth(), 8, 0.0, rng);
    const VerbalizerHead head = init_head(h, enc.embed, v, Mode::SinglePath);

    SECTION("leaf averages its own tokens") {
        const int leaf = h.id_of("computer vision");
        const Vec col = head_column(head, 1, h.local_index(leaf));
        const Vec ec = embed_row(enc.embed, v.lookup("computer"));
        const Vec ev = embed_row(enc.embed, v.lookup("vision"));
        for (std::size_t c = 0; c < col.size(); ++c) {
            CHECK(col[c] == Approx(0.5 * (ec[c] + ev[c])).margin(1e-12));
        }
    }
    SECTION("parent averages over five tokens") {
        const int cs = h.id_of("CS");
        const Vec col = head_column(head, 0, h.local_index(cs));
        const char* toks[] = {"cs", "computer", "vision", "machine", "learning"};
        for (std::size_t c = 0; c < col.size(); ++c) {
            double mean = 0.0;
            for (const char* t : toks) {
                mean += enc.embed(v.lookup(t), static_cast<int>(c));
            }
            mean /= 5.0;
            CHECK(col[c] == Approx(mean).margin(1e-12));
        }
    }
    SECTION("bias starts at zero") {
        for (const Vec& b : head.bias) {
            for (double x : b) {
                CHECK(x == 0.0);
            }
        }
    }
}

TEST_CASE("names that tokenize identically give identical columns", "[verbalizer]") {
    // Distinct label names, same lowercase token stream.
    const Hierarchy h = Hierarchy::from_edges(
        {{std::nullopt, "News"}, {{"News"}, "news"}, {std::nullopt, "Sports"}, {{"Sports"}, "sports"}});
    const Vocab v = demo_vocab(h);
    Rng rng(2);
    EncoderParams enc = EncoderParams::init(v.size(), h.depth(), 6, 0.0, rng);
    const VerbalizerHead head = init_head(h, enc.embed, v, Mode::SinglePath);

    const Vec parent = head_column(head, 0, h.local_index(h.id_of("News")));
    const Vec child = head_column(head, 1, h.local_index(h.id_of("news")));
    CHECK(parent == child);
}

TEST_CASE("unknown label tokens fall back to the UNK embedding", "[verbalizer]") {
    const Hierarchy h = Hierarchy::from_edges({{std::nullopt, "C31"}, {{"C31"}, "C3101"}});
    Vocab v = Vocab::build({"completely different corpus"}, h.depth());
    Rng rng(3);
    EncoderParams enc = EncoderParams::init(v.size(), h.depth(), 6, 0.0, rng);
    const VerbalizerHead head = init_head(h, enc.embed, v, Mode::SinglePath);
    const Vec unk = embed_row(enc.embed, Vocab::kUnk);
    CHECK(head_column(head, 0, 0) == unk);
    CHECK(head_column(head, 1, 0) == unk);
}

TEST_CASE("layer logits", "[verbalizer]") {
    VerbalizerHead head;
    head.mode = Mode::SinglePath;
    head.hidden = 3;
    head.weight.emplace_back(3, 3);
    head.bias.emplace_back(3, 0.0);
    Mat& w = head.weight[0];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            w(i, j) = 10 * i + j;
        }
    }
    MaskHiddenStates states;
    states.h = {{1.0, 0.0, 0.0}};

    SECTION("basis vector picks out the first row") {
        const auto logits = layer_logits(head, states);
        REQUIRE(logits.size() == 1);
        CHECK(logits[0] == Vec{0.0, 1.0, 2.0});
    }
    SECTION("bias shifts additively") {
        head.bias[0] = {5.0, 6.0, 7.0};
        const auto logits = layer_logits(head, states);
        CHECK(logits[0] == Vec{5.0, 7.0, 9.0});
    }
    SECTION("dimension mismatch is rejected") {
        states.h = {{1.0, 0.0}};
        CHECK_THROWS_AS(layer_logits(head, states), Error);
    }
}

TEST_CASE("probability conversion", "[verbalizer]") {
    SECTION("uniform logits give uniform softmax") {
        const LayerProbabilities p = probabilities({{1.5, 1.5, 1.5, 1.5}}, Mode::SinglePath);
        for (double x : p.p[0]) {
            CHECK(x == Approx(0.25).epsilon(1e-12));
        }
    }
    SECTION("softmax of [ln 2, 0]") {
        const LayerProbabilities p = probabilities({{std::log(2.0), 0.0}}, Mode::SinglePath);
        CHECK(p.p[0][0] == Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(p.p[0][1] == Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SECTION("sigmoid at zero is one half") {
        const LayerProbabilities p = probabilities({{0.0}}, Mode::MultiPath);
        CHECK(p.p[0][0] == Approx(0.5).epsilon(1e-12));
    }
    SECTION("softmax layers sum to one") {
        Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            Vec logits(5);
            for (double& x : logits) {
                x = rng.uniform(-10.0, 10.0);
            }
            const LayerProbabilities p = probabilities({logits}, Mode::SinglePath);
            double sum = 0.0;
            for (double x : p.p[0]) {
                CHECK(x >= 0.0);
                sum += x;
            }
            CHECK(sum == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("decode", "[verbalizer]") {
    const Hierarchy h = Hierarchy::from_edges(
        {{std::nullopt, "a"}, {std::nullopt, "b"}, {std::nullopt, "c"}});

    SECTION("argmax per layer") {
        LayerProbabilities p;
        p.mode = Mode::SinglePath;
        p.p = {{0.1, 0.7, 0.2}};
        CHECK(decode(p, h) == std::set<int>{h.id_of("b")});
    }
    SECTION("exact tie goes to the lower id") {
        LayerProbabilities p;
        p.mode = Mode::SinglePath;
        p.p = {{0.5, 0.5, 0.0}};
        CHECK(decode(p, h) == std::set<int>{h.id_of("a")});
    }
    SECTION("threshold is inclusive") {
        LayerProbabilities p;
        p.mode = Mode::MultiPath;
        p.p = {{0.5, 0.49, 0.51}};
        CHECK(decode(p, h, 0.5) == std::set<int>{h.id_of("a"), h.id_of("c")});
    }
    SECTION("threshold must sit strictly inside (0,1)") {
        LayerProbabilities p;
        p.mode = Mode::MultiPath;
        p.p = {{0.5, 0.5, 0.5}};
        CHECK_THROWS_AS(decode(p, h, 1.0), Error);
    }
}

TEST_CASE("softmax shift invariance leaves decode unchanged", "[verbalizer]") {
    const Hierarchy h = Hierarchy::from_edges(
        {{std::nullopt, "a"}, {std::nullopt, "b"}, {std::nullopt, "c"}});
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Vec logits(3);
        for (double& x : logits) {
            x = rng.uniform(-4.0, 4.0);
        }
        Vec shifted = logits;
        const double c = rng.uniform(-50.0, 50.0);
        for (double& x : shifted) {
            x += c;
        }
        const LayerProbabilities p0 = probabilities({logits}, Mode::SinglePath);
        const LayerProbabilities p1 = probabilities({shifted}, Mode::SinglePath);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(p0.p[0][j] == Approx(p1.p[0][j]).margin(1e-12));
        }
        CHECK(decode(p0, h) == decode(p1, h));
    }
}

TEST_CASE("head checkpoint round trip is bit-exact", "[verbalizer]") {
    const Hierarchy h = small_tax();
    const Vocab v = demo_vocab(h);
    Rng rng(6);
    EncoderParams enc = EncoderParams::init(v.size(), h.depth(), 8, 0.0, rng);
    VerbalizerHead head = init_head(h, enc.embed, v, Mode::MultiPath);
    for (Vec& b : head.bias) {
        for (double& x : b) {
            x = rng.uniform(-1.0, 1.0);
        }
    }

    std::filesystem::create_directories("verb_io_test");
    save_head(head, "verb_io_test/head.bin");
    const VerbalizerHead loaded = load_head("verb_io_test/head.bin", Mode::MultiPath);
    REQUIRE(loaded.depth() == head.depth());
    CHECK(loaded.hidden == head.hidden);
    for (int d = 0; d < head.depth(); ++d) {
        CHECK(loaded.weight[static_cast<std::size_t>(d)].data ==
              head.weight[static_cast<std::size_t>(d)].data);
        CHECK(loaded.bias[static_cast<std::size_t>(d)] == head.bias[static_cast<std::size_t>(d)]);
    }
}
