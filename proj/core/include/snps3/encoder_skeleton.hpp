#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snps3/matrix.hpp"
#include "snps3/tokenizer.hpp"

namespace snps3 {

/// SNP: one stack serves the text and cross-modal paths.
/// P3E: a text stack followed by a separate cross-modal stack.
enum class EncoderVariant : std::uint8_t { SNP, P3E };

std::string_view to_string(EncoderVariant v);
EncoderVariant parse_variant(std::string_view name);

/// BERT-Base defaults.
struct EncoderConfig {
    std::size_t layers = 12;
    std::size_t hidden = 768;
    std::size_t heads = 12;
    std::size_t ffn = 3072;
    std::size_t vocab_size = 30522;
    std::size_t max_positions = 512;
    std::size_t type_vocab_size = 2;
    /// Fixed caption length N_t accepted by the forward passes.
    std::size_t text_length = kDefaultTextLength;
    EncoderVariant variant = EncoderVariant::SNP;
    std::size_t cross_layers = 3;

    /// Throws ConfigError.
    void validate() const;
};

EncoderConfig read_encoder_config(const std::filesystem::path& path);
EncoderConfig encoder_config_from_json(std::string_view text);
std::string encoder_config_to_json(const EncoderConfig& config);

struct LayerParams {
    FeatureMatrix q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    FeatureMatrix attn_ln_g, attn_ln_b;
    FeatureMatrix ff1_w, ff1_b, ff2_w, ff2_b;
    FeatureMatrix ffn_ln_g, ffn_ln_b;
};

struct TransformerStack {
    std::vector<LayerParams> layers;
};

struct Embeddings {
    FeatureMatrix token, position, segment, ln_g, ln_b;
};

/// A named, read-only view of one parameter tensor.
struct TensorRef {
    std::string name;
    const FeatureMatrix* tensor = nullptr;
};

class EncoderParams {
public:
    EncoderParams(EncoderConfig config, std::uint64_t seed);

    const EncoderConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    const Embeddings& embeddings() const { return embeddings_; }

    const TransformerStack& text_stack() const { return stacks_[text_stack_]; }
    const TransformerStack& cross_stack() const { return stacks_[cross_stack_]; }
    TransformerStack& text_stack() { return stacks_[text_stack_]; }
    TransformerStack& cross_stack() { return stacks_[cross_stack_]; }
    std::size_t stack_count() const { return stacks_.size(); }

    /// Stack tensors used by forward_text.
    std::vector<TensorRef> text_path_tensors() const;
    /// Stack tensors used by forward_crossmodal.
    std::vector<TensorRef> crossmodal_path_tensors() const;
    /// Every distinct tensor, embeddings first.
    std::vector<TensorRef> all_tensors() const;
    std::size_t element_count() const;

private:
    EncoderConfig config_;
    std::uint64_t seed_;
    Embeddings embeddings_;
    std::vector<TransformerStack> stacks_;
    std::size_t text_stack_ = 0;
    std::size_t cross_stack_ = 0;
};

/// Deterministic N(0, 0.02) weights, zero biases, unit layer-norm gains.
/// Throws ConfigError for an invalid config.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// N_V visual tokens of width d. Their position embedding is zero; they carry segment id 1.
struct VisualFeatures {
    FeatureMatrix tokens;
    bool zero_position = true;
};

/// T = E(E_B(S)): N_t x d token states. Throws ArgumentError when the sequence
/// length differs from config.text_length or an id is out of range.
FeatureMatrix forward_text(const EncoderParams& params, const TokenSeq& seq);

/// M: (N_t + N_V) x d. SNP runs [E_B(S), V] through the shared stack; P3E runs
/// [E_txt(E_B(S)), V] through the cross stack. Row 0 is the [CLS] state.
FeatureMatrix forward_crossmodal(const EncoderParams& params, const TokenSeq& seq, const VisualFeatures& visual);

/// Itemized trainable-parameter counts.
struct ParamReport {
    EncoderVariant variant = EncoderVariant::SNP;
    std::vector<std::pair<std::string, std::uint64_t>> items;
    std::uint64_t total = 0;
    std::vector<std::string> assumptions;

    std::uint64_t item(std::string_view name) const;
};

/// ResNet-50 trainable parameters (torchvision resnet50, with classifier).
inline constexpr std::uint64_t kResNet50Params = 25'557'032;

/// Closed-form count: visual constant, BERT embedder, text stack, cross stack
/// (P3E only), pooler, masked-token prediction heads with an untied decoder
/// (one per encoder output path that has its own stack), and the matching MLP.
ParamReport count_params(const EncoderConfig& config, std::uint64_t visual_constant = kResNet50Params);

/// 1 - snp.total / p3e.total.
double relative_reduction(const ParamReport& snp, const ParamReport& p3e);

std::string param_report_to_json(const ParamReport& report);

}  // namespace snps3
