#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "snps3/matrix.hpp"
#include "snps3/tokenizer.hpp"

namespace snps3 {

/// Scalar loss with one gradient per differentiable input, in input order.
struct LossResult {
    double value = 0.0;
    std::vector<Matrix64> grads;
};

/// Mean cross-entropy over the masked rows of `logits` (|Q| x V).
/// Throws ArgumentError when |Q| = 0 (the caller omits the term) or a label is out of range.
/// grads: [d logits].
LossResult masked_ce(const Matrix64& logits, std::span<const TokenId> labels);

/// Parameter-free global matching. For each text anchor i the visual rows form
/// the candidate set: -sum_i log softmax_j(scale <v_j, t_i>)[i].
/// grads: [d vis, d txt_cls].
LossResult gvtm_free(const Matrix64& vis, const Matrix64& txt_cls, double scale = 1.0);

/// Scored global matching over a square matrix with scores(j, i) = Theta(m_{j,i}):
/// -sum_i log softmax over column i at the diagonal. grads: [d scores].
LossResult gvtm_scored(const Matrix64& scores);

/// Local vision-word matching. sig_tokens holds N_L sampled significant token
/// features per caption. grads: [d vis, d sig_tokens (flattened to (B*N_L) x d)].
LossResult lvwm(const Matrix64& vis, const TokenBlock64& sig_tokens, double scale = 1.0);

/// Sum of the five objectives; absent terms (empty mask) contribute zero.
/// Throws ArgumentError on a non-finite term.
double total_loss(const std::array<std::optional<double>, 5>& terms);

// Matching head --------------------------------------------------------------

/// Two affine layers with a tanh-approximated GELU between them:
/// score = w2 . gelu(x W1 + b1) + b2, hidden width = W1.cols().
struct MlpParams {
    Matrix64 w1;               // d x h
    std::vector<double> b1;    // h
    std::vector<double> w2;    // h
    double b2 = 0.0;

    static MlpParams zeros(std::size_t d, std::size_t h);
    static MlpParams random(std::size_t d, std::size_t h, std::uint64_t seed, double stddev = 0.1);
    std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + 1; }
};

struct MlpGrads {
    Matrix64 input;            // n x d
    Matrix64 w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;
};

/// n x 1 column of scores. Throws ArgumentError on shape mismatch.
Matrix64 mlp_score(const Matrix64& pair_features, const MlpParams& params);

/// Backpropagates `upstream` (n x 1, d loss / d score) through mlp_score.
MlpGrads mlp_score_backward(const Matrix64& pair_features, const MlpParams& params, const Matrix64& upstream);

// Gradient checking -----------------------------------------------------------

using Kernel = std::function<LossResult(std::span<const Matrix64>)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool finite = true;
    /// Input and flat coordinate of the worst (or first non-finite) entry.
    std::size_t input = 0;
    std::size_t coordinate = 0;

    bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

/// Central differences on every coordinate of every input; error is
/// |analytic - numeric| / max(1, |numeric|). eps must lie in [1e-6, 1e-2].
GradCheckReport grad_check(const Kernel& f, std::vector<Matrix64> point, double eps = 1e-4);

// Feature files ---------------------------------------------------------------
// One JSON header line {"rows","cols","dtype":"f32","order":"row-major"[,"n_l"][,"sha256"]},
// then raw little-endian float32 payload.

/// Hash of the little-endian float32 payload, as stored in feature file headers.
std::string feature_hash(const FeatureMatrix& m);

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_file(const std::filesystem::path& path);
void write_token_block_file(const std::filesystem::path& path, const TokenBlock& block);
TokenBlock read_token_block_file(const std::filesystem::path& path);

}  // namespace snps3
