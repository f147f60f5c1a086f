#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "snps3/encoder_skeleton.hpp"
#include "snps3/errors.hpp"
#include "snps3/loss_kernels.hpp"
#include "snps3/rng.hpp"
#include "test_support.hpp"

using namespace snps3;

namespace {

EncoderConfig toy_config(EncoderVariant variant = EncoderVariant::SNP) {
    EncoderConfig c;
    c.layers = 2;
    c.hidden = 64;
    c.heads = 4;
    c.ffn = 128;
    c.vocab_size = 64;
    c.max_positions = 16;
    c.text_length = 12;
    c.variant = variant;
    c.cross_layers = 1;
    return c;
}

// [CLS] w... [SEP] then pads, using the toy id layout 0=PAD 2=CLS 3=SEP.
TokenSeq make_seq(const std::vector<TokenId>& words, std::size_t n_t) {
    TokenSeq s;
    s.ids.push_back(2);
    for (TokenId w : words) s.ids.push_back(w);
    s.ids.push_back(3);
    s.length = s.ids.size();
    s.ids.resize(n_t, 0);
    s.word_index.assign(n_t, -1);
    s.is_special.assign(n_t, false);
    for (std::size_t p = 0; p < n_t; ++p) s.is_special[p] = p == 0 || p + 1 >= s.length;
    return s;
}

VisualFeatures make_visual(std::size_t n_v, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    VisualFeatures v{FeatureMatrix(n_v, d), true};
    for (float& x : v.tokens.data()) x = static_cast<float>(rng.normal());
    return v;
}

bool all_finite(const FeatureMatrix& m) {
    for (float x : m.data()) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::set<const FeatureMatrix*> pointers(const std::vector<TensorRef>& refs) {
    std::set<const FeatureMatrix*> out;
    for (const auto& r : refs) out.insert(r.tensor);
    return out;
}

}  // namespace

TEST_CASE("config validation and json") {
    EncoderConfig c = toy_config();
    CHECK_NOTHROW(c.validate());
    c.heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy_config(EncoderVariant::P3E);
    c.cross_layers = 0;
    CHECK_THROWS_AS(init_params(c, 1), ConfigError);
    c = toy_config();
    c.text_length = 17;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    const EncoderConfig back = encoder_config_from_json(encoder_config_to_json(toy_config(EncoderVariant::P3E)));
    CHECK(back.hidden == 64);
    CHECK(back.variant == EncoderVariant::P3E);
    CHECK(back.text_length == 12);
    CHECK_THROWS_AS(encoder_config_from_json("[1,2]"), FormatError);
    CHECK_THROWS_AS(encoder_config_from_json(R"({"variant":"triple"})"), ConfigError);

    const EncoderConfig defaults = encoder_config_from_json("{}");
    CHECK(defaults.hidden == 768);
    CHECK(defaults.layers == 12);
    CHECK(defaults.cross_layers == 3);
}

TEST_CASE("init_params determinism") {
    const auto a = init_params(toy_config(), 7);
    const auto b = init_params(toy_config(), 7);
    const auto c = init_params(toy_config(), 8);
    const auto ta = a.all_tensors(), tb = b.all_tensors(), tc = c.all_tensors();
    REQUIRE(ta.size() == tb.size());
    bool any_differs = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].name == tb[i].name);
        CHECK(*ta[i].tensor == *tb[i].tensor);
        any_differs = any_differs || !(*ta[i].tensor == *tc[i].tensor);
    }
    CHECK(any_differs);
}

TEST_CASE("SNP holds one stack shared by both paths") {
    const auto snp = init_params(toy_config(), 1);
    CHECK(snp.stack_count() == 1);
    CHECK(&snp.text_stack() == &snp.cross_stack());
    CHECK(pointers(snp.text_path_tensors()) == pointers(snp.crossmodal_path_tensors()));

    const auto p3e = init_params(toy_config(EncoderVariant::P3E), 1);
    CHECK(p3e.stack_count() == 2);
    CHECK(&p3e.text_stack() != &p3e.cross_stack());
    CHECK(p3e.cross_stack().layers.size() == 1);
    // The cross path reaches the text stack too, plus tensors of its own.
    const auto text = pointers(p3e.text_path_tensors());
    const auto cross = pointers(p3e.crossmodal_path_tensors());
    CHECK(std::includes(cross.begin(), cross.end(), text.begin(), text.end()));
    CHECK(cross.size() > text.size());
}

TEST_CASE("toy shapes and a hand count") {
    EncoderConfig c;
    c.hidden = 8;
    c.layers = 2;
    c.heads = 2;
    c.vocab_size = 16;
    c.ffn = 32;
    c.max_positions = 8;
    c.text_length = 8;
    const auto p = init_params(c, 3);
    CHECK(p.embeddings().token.rows() == 16);
    CHECK(p.embeddings().token.cols() == 8);
    CHECK(p.embeddings().position.rows() == 8);
    CHECK(p.embeddings().segment.rows() == 2);
    const auto& layer = p.text_stack().layers.at(1);
    CHECK(layer.q_w.rows() == 8);
    CHECK(layer.q_w.cols() == 8);
    CHECK(layer.ff1_w.cols() == 32);
    CHECK(layer.ff2_w.rows() == 32);
    CHECK(layer.ff2_b.size() == 8);

    // embeddings: 16*8 + 8*8 + 2*8 + 2*8 = 224
    // per layer: 4*(64+8) + 2*8 + (8*32+32) + (32*8+8) + 2*8 = 872
    const std::size_t hand = 224 + 2 * 872;
    CHECK(hand == 1968);
    CHECK(p.element_count() == hand);

    const ParamReport r = count_params(c, 0);
    CHECK(r.item("embedder") + r.item("text_stack") + r.item("cross_stack") == hand);
}

TEST_CASE("count_params agrees with the enumerated tensors") {
    for (auto variant : {EncoderVariant::SNP, EncoderVariant::P3E}) {
        EncoderConfig c = toy_config(variant);
        c.cross_layers = 2;
        const auto p = init_params(c, 0);
        const ParamReport r = count_params(c, 1000);
        CHECK(r.item("embedder") + r.item("text_stack") + r.item("cross_stack") == p.element_count());
        std::uint64_t sum = 0;
        for (const auto& [name, n] : r.items) sum += n;
        CHECK(sum == r.total);
        CHECK(r.item("visual_encoder") == 1000);
        CHECK_FALSE(r.assumptions.empty());
    }
}

TEST_CASE("BERT-Base counting reproduces the reported reduction") {
    EncoderConfig snp;
    EncoderConfig p3e;
    p3e.variant = EncoderVariant::P3E;
    const ParamReport a = count_params(snp);
    const ParamReport b = count_params(p3e);
    const double reduction = relative_reduction(a, b);
    CHECK(reduction >= 0.19);
    CHECK(reduction <= 0.25);
    // Table 2 quotes roughly 160.4M vs 205.5M; the counting model should be in that neighbourhood.
    CHECK(std::abs(static_cast<double>(a.total) - 160.4e6) / 160.4e6 < 0.02);
    CHECK(std::abs(static_cast<double>(b.total) - 205.5e6) / 205.5e6 < 0.02);

    // A BERT-Base encoder layer has 7,087,872 parameters.
    CHECK(a.item("text_stack") == 12u * 7'087'872u);
    CHECK(b.item("cross_stack") == 3u * 7'087'872u);

    EncoderConfig degenerate = p3e;
    degenerate.cross_layers = 0;
    CHECK(count_params(degenerate).total == a.total);

    const auto j = nlohmann::json::parse(param_report_to_json(a));
    CHECK(j["total"].get<std::uint64_t>() == a.total);
    CHECK(j.contains("assumptions"));
}

TEST_CASE("forward shapes") {
    for (auto variant : {EncoderVariant::SNP, EncoderVariant::P3E}) {
        const auto p = init_params(toy_config(variant), 11);
        const TokenSeq s = make_seq({10, 11, 12}, 12);
        const FeatureMatrix t = forward_text(p, s);
        CHECK(t.rows() == 12);
        CHECK(t.cols() == 64);
        CHECK(all_finite(t));
        for (std::size_t n_v : {1u, 4u, 16u}) {
            const FeatureMatrix m = forward_crossmodal(p, s, make_visual(n_v, 64, n_v));
            CHECK(m.rows() == 12 + n_v);
            CHECK(m.cols() == 64);
            CHECK(all_finite(m));
        }
    }
}

TEST_CASE("forward argument errors") {
    const auto p = init_params(toy_config(), 11);
    CHECK_THROWS_AS(forward_text(p, make_seq({10}, 11)), ArgumentError);
    CHECK_THROWS_AS(forward_text(p, make_seq({64}, 12)), ArgumentError);
    const TokenSeq s = make_seq({10}, 12);
    CHECK_THROWS_AS(forward_crossmodal(p, s, make_visual(2, 32, 0)), ArgumentError);
    CHECK_THROWS_AS(forward_crossmodal(p, s, make_visual(0, 64, 0)), ArgumentError);
    VisualFeatures bad = make_visual(2, 64, 0);
    bad.tokens(1, 3) = NAN;
    CHECK_THROWS_AS(forward_crossmodal(p, s, bad), ArgumentError);
}

TEST_CASE("forward passes are pure") {
    const auto p = init_params(toy_config(), 5);
    const TokenSeq s = make_seq({20, 21, 22, 23}, 12);
    const VisualFeatures v = make_visual(4, 64, 1);
    CHECK(forward_text(p, s) == forward_text(p, s));
    CHECK(forward_crossmodal(p, s, v) == forward_crossmodal(p, s, v));
}

TEST_CASE("different captions give different CLS states") {
    const auto p = init_params(toy_config(), 5);
    const FeatureMatrix a = forward_text(p, make_seq({20, 21, 22}, 12));
    const FeatureMatrix b = forward_text(p, make_seq({30, 31}, 12));
    float diff = 0.0f;
    for (std::size_t c = 0; c < 64; ++c) diff += std::abs(a(0, c) - b(0, c));
    CHECK(diff > 1e-3f);
}

TEST_CASE("pad positions do not influence real tokens") {
    const auto p = init_params(toy_config(), 5);
    TokenSeq a = make_seq({20, 21}, 12);
    TokenSeq b = a;
    b.ids[8] = 40;  // beyond length; masked as padding
    const FeatureMatrix fa = forward_text(p, a), fb = forward_text(p, b);
    for (std::size_t r = 0; r < a.length; ++r) {
        for (std::size_t c = 0; c < 64; ++c) CHECK(fa(r, c) == fb(r, c));
    }
}

TEST_CASE("perturbing a shared weight changes both SNP paths") {
    auto p = init_params(toy_config(), 9);
    const TokenSeq s = make_seq({15, 16, 17}, 12);
    const VisualFeatures v = make_visual(4, 64, 2);
    const FeatureMatrix t0 = forward_text(p, s), m0 = forward_crossmodal(p, s, v);
    p.text_stack().layers[0].ff1_w(3, 5) += 0.5f;
    CHECK_FALSE(forward_text(p, s) == t0);
    CHECK_FALSE(forward_crossmodal(p, s, v) == m0);

    // In P3E the cross stack is private to the cross-modal path.
    auto q = init_params(toy_config(EncoderVariant::P3E), 9);
    const FeatureMatrix qt = forward_text(q, s), qm = forward_crossmodal(q, s, v);
    q.cross_stack().layers[0].ff1_w(3, 5) += 0.5f;
    CHECK(forward_text(q, s) == qt);
    CHECK_FALSE(forward_crossmodal(q, s, v) == qm);
}

TEST_CASE("golden output hashes") {
    const auto fixture = nlohmann::json::parse(snps3::testing::slurp(std::string(SNPS3_FIXTURES) + "/encoder_golden.json"));
    const TokenSeq s = make_seq({10, 20, 30, 40, 50}, 12);
    const VisualFeatures v = make_visual(4, 64, 77);
    for (auto variant : {EncoderVariant::SNP, EncoderVariant::P3E}) {
        const auto p = init_params(toy_config(variant), 7);
        const std::string key(to_string(variant));
        CHECK(feature_hash(forward_text(p, s)) == fixture[key]["text"].get<std::string>());
        CHECK(feature_hash(forward_crossmodal(p, s, v)) == fixture[key]["crossmodal"].get<std::string>());
    }
}
