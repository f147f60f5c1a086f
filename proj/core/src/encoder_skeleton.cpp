#include "snps3/encoder_skeleton.hpp"

#include <algorithm>
#include <cmath>

#include "jsonl.hpp"
#include "snps3/errors.hpp"
#include "snps3/rng.hpp"

namespace snps3 {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-12;

using Activations = Matrix64;

FeatureMatrix normal_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
    FeatureMatrix m(rows, cols);
    for (float& x : m.data()) x = static_cast<float>(kInitStd * rng.normal());
    return m;
}

LayerParams init_layer(Rng& rng, const EncoderConfig& c) {
    const std::size_t d = c.hidden;
    LayerParams p;
    p.q_w = normal_tensor(rng, d, d);
    p.q_b = FeatureMatrix(1, d);
    p.k_w = normal_tensor(rng, d, d);
    p.k_b = FeatureMatrix(1, d);
    p.v_w = normal_tensor(rng, d, d);
    p.v_b = FeatureMatrix(1, d);
    p.o_w = normal_tensor(rng, d, d);
    p.o_b = FeatureMatrix(1, d);
    p.attn_ln_g = FeatureMatrix(1, d, 1.0f);
    p.attn_ln_b = FeatureMatrix(1, d);
    p.ff1_w = normal_tensor(rng, d, c.ffn);
    p.ff1_b = FeatureMatrix(1, c.ffn);
    p.ff2_w = normal_tensor(rng, c.ffn, d);
    p.ff2_b = FeatureMatrix(1, d);
    p.ffn_ln_g = FeatureMatrix(1, d, 1.0f);
    p.ffn_ln_b = FeatureMatrix(1, d);
    return p;
}

void append_stack(std::vector<TensorRef>& out, const TransformerStack& stack, const std::string& prefix) {
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        const LayerParams& p = stack.layers[l];
        const std::string base = prefix + ".layer" + std::to_string(l) + ".";
        const std::pair<const char*, const FeatureMatrix*> named[] = {
            {"q_w", &p.q_w},         {"q_b", &p.q_b},         {"k_w", &p.k_w},     {"k_b", &p.k_b},
            {"v_w", &p.v_w},         {"v_b", &p.v_b},         {"o_w", &p.o_w},     {"o_b", &p.o_b},
            {"attn_ln_g", &p.attn_ln_g}, {"attn_ln_b", &p.attn_ln_b}, {"ff1_w", &p.ff1_w}, {"ff1_b", &p.ff1_b},
            {"ff2_w", &p.ff2_w},     {"ff2_b", &p.ff2_b},     {"ffn_ln_g", &p.ffn_ln_g}, {"ffn_ln_b", &p.ffn_ln_b},
        };
        for (const auto& [name, tensor] : named) out.push_back({base + name, tensor});
    }
}

// y = x W + b, W stored in x.cols() x out layout.
Activations affine(const Activations& x, const FeatureMatrix& w, const FeatureMatrix& b) {
    Activations y(x.rows(), w.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto out = y.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) out[c] = b(0, c);
        const auto in = x.row(r);
        for (std::size_t k = 0; k < w.rows(); ++k) {
            const double xk = in[k];
            const auto wk = w.row(k);
            for (std::size_t c = 0; c < w.cols(); ++c) out[c] += xk * wk[c];
        }
    }
    return y;
}

void layer_norm(Activations& x, const FeatureMatrix& g, const FeatureMatrix& b) {
    const auto d = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean) * inv * g(0, c) + b(0, c);
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x))); }

// Post-LN BERT block. Keys at positions where `valid` is false are masked out.
void run_layer(Activations& x, const LayerParams& p, std::size_t heads, const std::vector<bool>& valid) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Activations q = affine(x, p.q_w, p.q_b);
    const Activations k = affine(x, p.k_w, p.k_b);
    const Activations v = affine(x, p.v_w, p.v_b);
    Activations ctx(n, d);
    std::vector<double> weights(n);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < n; ++i) {
            double max_score = -INFINITY;
            for (std::size_t j = 0; j < n; ++j) {
                if (!valid[j]) {
                    weights[j] = -INFINITY;
                    continue;
                }
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
                weights[j] = s * scale;
                max_score = std::max(max_score, weights[j]);
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                weights[j] = valid[j] ? std::exp(weights[j] - max_score) : 0.0;
                norm += weights[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (weights[j] == 0.0) continue;
                const double w = weights[j] / norm;
                for (std::size_t c = 0; c < dh; ++c) ctx(i, off + c) += w * v(j, off + c);
            }
        }
    }
    Activations attn = affine(ctx, p.o_w, p.o_b);
    for (std::size_t i = 0; i < attn.size(); ++i) attn.data()[i] += x.data()[i];
    layer_norm(attn, p.attn_ln_g, p.attn_ln_b);

    Activations hidden = affine(attn, p.ff1_w, p.ff1_b);
    for (double& h : hidden.data()) h = gelu(h);
    Activations out = affine(hidden, p.ff2_w, p.ff2_b);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += attn.data()[i];
    layer_norm(out, p.ffn_ln_g, p.ffn_ln_b);
    x = std::move(out);
}

void run_stack(Activations& x, const TransformerStack& stack, std::size_t heads, const std::vector<bool>& valid) {
    for (const auto& layer : stack.layers) run_layer(x, layer, heads, valid);
}

void check_sequence(const EncoderParams& params, const TokenSeq& seq) {
    const auto& c = params.config();
    if (seq.size() != c.text_length) {
        throw ArgumentError("token sequence has length " + std::to_string(seq.size()) + ", encoder expects " +
                            std::to_string(c.text_length));
    }
    for (TokenId id : seq.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
            throw ArgumentError("token id " + std::to_string(id) + " outside the encoder vocabulary");
        }
    }
}

// E_B: token + position + segment(0), then layer norm.
Activations embed_text(const EncoderParams& params, const TokenSeq& seq) {
    const auto& e = params.embeddings();
    const std::size_t d = params.config().hidden;
    Activations x(seq.size(), d);
    for (std::size_t p = 0; p < seq.size(); ++p) {
        const auto tok = e.token.row(static_cast<std::size_t>(seq.ids[p]));
        const auto pos = e.position.row(p);
        const auto seg = e.segment.row(0);
        auto out = x.row(p);
        for (std::size_t c = 0; c < d; ++c) out[c] = static_cast<double>(tok[c]) + pos[c] + seg[c];
    }
    layer_norm(x, e.ln_g, e.ln_b);
    return x;
}

std::vector<bool> text_mask(const TokenSeq& seq) {
    std::vector<bool> valid(seq.size(), false);
    for (std::size_t p = 0; p < seq.length && p < seq.size(); ++p) valid[p] = true;
    return valid;
}

FeatureMatrix to_features(const Activations& x) { return FeatureMatrix::cast(x); }

}  // namespace

std::string_view to_string(EncoderVariant v) { return v == EncoderVariant::SNP ? "snp" : "p3e"; }

EncoderVariant parse_variant(std::string_view name) {
    if (name == "snp" || name == "SNP") return EncoderVariant::SNP;
    if (name == "p3e" || name == "P3E") return EncoderVariant::P3E;
    throw ConfigError("unknown encoder variant '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
    if (hidden == 0 || heads == 0 || hidden % heads != 0) throw ConfigError("hidden must be a positive multiple of heads");
    if (layers == 0 || ffn == 0) throw ConfigError("layers and ffn must be positive");
    if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
    if (type_vocab_size < 2) throw ConfigError("type_vocab_size must be at least 2 (text and visual segments)");
    if (text_length < 2 || text_length > max_positions) {
        throw ConfigError("text_length must lie in [2, max_positions]");
    }
    if (variant == EncoderVariant::P3E && cross_layers < 1) throw ConfigError("P3E requires cross_layers >= 1");
}

EncoderConfig encoder_config_from_json(std::string_view text) {
    EncoderConfig c;
    try {
        const auto j = detail::json::parse(text);
        if (!j.is_object()) throw FormatError("encoder config must be a JSON object");
        c.layers = j.value("layers", c.layers);
        c.hidden = j.value("hidden", c.hidden);
        c.heads = j.value("heads", c.heads);
        c.ffn = j.value("ffn", c.ffn);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.max_positions = j.value("max_positions", c.max_positions);
        c.type_vocab_size = j.value("type_vocab_size", c.type_vocab_size);
        c.text_length = j.value("text_length", c.text_length);
        c.cross_layers = j.value("cross_layers", c.cross_layers);
        if (j.contains("variant")) c.variant = parse_variant(j["variant"].get<std::string>());
    } catch (const detail::json::exception& e) {
        throw FormatError(std::string("encoder config: ") + e.what());
    }
    c.validate();
    return c;
}

EncoderConfig read_encoder_config(const std::filesystem::path& path) {
    return encoder_config_from_json(detail::read_json_file(path).dump());
}

std::string encoder_config_to_json(const EncoderConfig& c) {
    detail::json j = {
        {"layers", c.layers},           {"hidden", c.hidden},
        {"heads", c.heads},             {"ffn", c.ffn},
        {"vocab_size", c.vocab_size},   {"max_positions", c.max_positions},
        {"type_vocab_size", c.type_vocab_size}, {"text_length", c.text_length},
        {"variant", std::string(to_string(c.variant))}, {"cross_layers", c.cross_layers},
    };
    return j.dump();
}

EncoderParams::EncoderParams(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    const std::size_t d = config_.hidden;
    Rng rng(seed);
    embeddings_.token = normal_tensor(rng, config_.vocab_size, d);
    embeddings_.position = normal_tensor(rng, config_.max_positions, d);
    embeddings_.segment = normal_tensor(rng, config_.type_vocab_size, d);
    embeddings_.ln_g = FeatureMatrix(1, d, 1.0f);
    embeddings_.ln_b = FeatureMatrix(1, d);

    auto make_stack = [&](std::size_t layers) {
        TransformerStack s;
        for (std::size_t l = 0; l < layers; ++l) s.layers.push_back(init_layer(rng, config_));
        return s;
    };
    stacks_.push_back(make_stack(config_.layers));
    if (config_.variant == EncoderVariant::P3E) {
        stacks_.push_back(make_stack(config_.cross_layers));
        cross_stack_ = 1;
    }
}

std::vector<TensorRef> EncoderParams::text_path_tensors() const {
    std::vector<TensorRef> out;
    append_stack(out, text_stack(), "stack" + std::to_string(text_stack_));
    return out;
}

std::vector<TensorRef> EncoderParams::crossmodal_path_tensors() const {
    std::vector<TensorRef> out;
    // P3E feeds text-stack outputs into the cross stack, so both are reachable.
    if (cross_stack_ != text_stack_) append_stack(out, text_stack(), "stack" + std::to_string(text_stack_));
    append_stack(out, cross_stack(), "stack" + std::to_string(cross_stack_));
    return out;
}

std::vector<TensorRef> EncoderParams::all_tensors() const {
    std::vector<TensorRef> out = {
        {"embeddings.token", &embeddings_.token},
        {"embeddings.position", &embeddings_.position},
        {"embeddings.segment", &embeddings_.segment},
        {"embeddings.ln_g", &embeddings_.ln_g},
        {"embeddings.ln_b", &embeddings_.ln_b},
    };
    for (std::size_t s = 0; s < stacks_.size(); ++s) append_stack(out, stacks_[s], "stack" + std::to_string(s));
    return out;
}

std::size_t EncoderParams::element_count() const {
    std::size_t n = 0;
    for (const auto& t : all_tensors()) n += t.tensor->size();
    return n;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) { return EncoderParams(config, seed); }

FeatureMatrix forward_text(const EncoderParams& params, const TokenSeq& seq) {
    check_sequence(params, seq);
    Activations x = embed_text(params, seq);
    run_stack(x, params.text_stack(), params.config().heads, text_mask(seq));
    return to_features(x);
}

FeatureMatrix forward_crossmodal(const EncoderParams& params, const TokenSeq& seq, const VisualFeatures& visual) {
    check_sequence(params, seq);
    const auto& c = params.config();
    const std::size_t d = c.hidden;
    const std::size_t n_v = visual.tokens.rows();
    if (n_v == 0) throw ArgumentError("visual features need at least one token");
    if (visual.tokens.cols() != d) {
        throw ArgumentError("visual token width " + std::to_string(visual.tokens.cols()) + " does not match hidden " +
                            std::to_string(d));
    }
    for (float v : visual.tokens.data()) {
        if (!std::isfinite(v)) throw ArgumentError("visual features contain a non-finite value");
    }

    Activations text = embed_text(params, seq);
    std::vector<bool> valid = text_mask(seq);
    if (c.variant == EncoderVariant::P3E) run_stack(text, params.text_stack(), c.heads, valid);

    const std::size_t n_t = seq.size();
    Activations joint(n_t + n_v, d);
    std::copy(text.data().begin(), text.data().end(), joint.data().begin());
    const auto seg = params.embeddings().segment.row(1);
    for (std::size_t k = 0; k < n_v; ++k) {
        auto out = joint.row(n_t + k);
        const auto in = visual.tokens.row(k);
        for (std::size_t col = 0; col < d; ++col) out[col] = static_cast<double>(in[col]) + seg[col];
    }
    valid.resize(n_t + n_v, true);
    run_stack(joint, params.cross_stack(), c.heads, valid);
    return to_features(joint);
}

std::uint64_t ParamReport::item(std::string_view name) const {
    for (const auto& [k, v] : items) {
        if (k == name) return v;
    }
    throw ArgumentError("no report item named " + std::string(name));
}

ParamReport count_params(const EncoderConfig& c, std::uint64_t visual_constant) {
    const std::uint64_t d = c.hidden;
    const std::uint64_t v = c.vocab_size;
    const std::uint64_t per_layer = 4 * (d * d + d) + 2 * d + (d * c.ffn + c.ffn) + (c.ffn * d + d) + 2 * d;
    const std::uint64_t embedder = v * d + c.max_positions * d + c.type_vocab_size * d + 2 * d;
    const std::uint64_t mlm_head = (d * d + d) + 2 * d + v * d + v;
    const bool separate_cross = c.variant == EncoderVariant::P3E && c.cross_layers > 0;
    const std::uint64_t cross = separate_cross ? c.cross_layers * per_layer : 0;
    const std::uint64_t heads = separate_cross ? 2 : 1;

    ParamReport r;
    r.variant = c.variant;
    r.items = {
        {"visual_encoder", visual_constant},
        {"embedder", embedder},
        {"text_stack", c.layers * per_layer},
        {"cross_stack", cross},
        {"pooler", d * d + d},
        {"mlm_heads", heads * mlm_head},
        {"matching_mlp", d * d + d + d + 1},
    };
    for (const auto& [_, n] : r.items) r.total += n;
    r.assumptions = {
        "visual_encoder: constant supplied by the caller (default ResNet-50, 25,557,032 parameters)",
        "embedder: token + position + segment tables and one layer norm",
        "text_stack: layers x (Q/K/V/O projections with biases, two layer norms, two-layer feed-forward)",
        "cross_stack: separate cross_layers-deep stack of the same block for P3E; zero for SNP (shared stack)",
        "pooler: one d x d dense layer with bias on the [CLS] state",
        "mlm_heads: dense + layer norm transform and an untied d x V decoder with bias; one head per distinct "
        "encoder stack producing masked-token predictions (text path, plus cross path for P3E)",
        "matching_mlp: two affine layers d -> d -> 1 scoring cross-modal [CLS] features",
    };
    return r;
}

double relative_reduction(const ParamReport& snp, const ParamReport& p3e) {
    if (p3e.total == 0) throw ArgumentError("reference report has zero parameters");
    return 1.0 - static_cast<double>(snp.total) / static_cast<double>(p3e.total);
}

std::string param_report_to_json(const ParamReport& r) {
    detail::json items = detail::json::object();
    detail::json order = detail::json::array();
    for (const auto& [k, v] : r.items) {
        items[k] = v;
        order.push_back(k);
    }
    detail::json j = {
        {"variant", std::string(to_string(r.variant))},
        {"items", std::move(items)},
        {"item_order", std::move(order)},
        {"total", r.total},
        {"assumptions", r.assumptions},
    };
    return j.dump(2);
}

}  // namespace snps3
