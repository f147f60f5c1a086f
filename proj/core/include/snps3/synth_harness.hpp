#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snps3/errors.hpp"
#include "snps3/matrix.hpp"
#include "snps3/semantic_miner.hpp"
#include "snps3/tokenizer.hpp"

namespace snps3 {

/// Adjective, noun and verb inventories of the synthetic grammar. A concept id
/// indexes the concatenation nouns ++ adjectives ++ verbs.
struct ConceptInventory {
    std::vector<std::string> nouns;
    std::vector<std::string> adjectives;
    std::vector<std::string> verbs;

    static const ConceptInventory& standard();
    std::size_t size() const { return nouns.size() + adjectives.size() + verbs.size(); }
    const std::string& word(std::size_t concept_id) const;
    PosTag tag(std::size_t concept_id) const;
};

/// WordPiece vocabulary covering the synthetic grammar, including a few
/// filler words that split into several pieces.
Vocab synth_vocab();

struct SynthRecord {
    std::string id;
    std::string caption;
    std::vector<std::string> words;
    std::vector<PosTag> tags;
    /// Multi-hot concept indicator plus seeded Gaussian noise; length = inventory size.
    std::vector<float> visual;
    /// Distinct concept ids mentioned in the caption, ascending.
    std::vector<std::size_t> concepts;
};

struct SynthOptions {
    std::size_t min_clauses = 2;
    std::size_t max_clauses = 3;
    double visual_noise = 0.1;
};

/// Captions of the form "a <adj> <noun> <verb> [and a <adj> <noun> <verb> ...]"
/// with filler adverbs. Words outside `vocab` are allowed; they tokenize to
/// pieces or [UNK]. Throws ArgumentError when size < 2.
std::vector<SynthRecord> gen_corpus(std::uint64_t seed, std::size_t size, const Vocab& vocab,
                                    const SynthOptions& options = {});

PosCorpus to_pos_corpus(const std::vector<SynthRecord>& records);
std::vector<CaptionRecord> to_caption_corpus(const std::vector<SynthRecord>& records);
FeatureMatrix visual_matrix(const std::vector<SynthRecord>& records);

// Retrieval -------------------------------------------------------------------

struct RetrievalMetrics {
    /// K -> recall for K in {1, 5, 10}.
    std::map<std::size_t, double> r_at;
    double mdr = 0.0;
    /// 1-based rank of the true pair per text anchor.
    std::vector<std::size_t> ranks;

    double recall(std::size_t k) const { return r_at.at(k); }
};

/// Text-to-video retrieval by dot product; row i of each matrix is a true pair.
/// Equal scores rank the lower video index first. Throws ArgumentError when empty.
RetrievalMetrics eval_retrieval(const Matrix64& vis, const Matrix64& txt);
RetrievalMetrics eval_retrieval(const FeatureMatrix& vis, const FeatureMatrix& txt);

/// {"r1","r5","r10","mdr"}
std::string metrics_to_json(const RetrievalMetrics& m);

// Toy alignment training --------------------------------------------------------

/// Raised when the training loss becomes non-finite.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t step, const std::string& what) : Error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Per-record inputs for the linear encoders.
struct ToyExample {
    std::vector<float> visual;
    /// Normalized bag of non-special caption tokens.
    std::vector<std::pair<TokenId, double>> bag;
    /// Sampled significant token ids (empty when the caption has none).
    std::vector<TokenId> local_tokens;
};

struct ToyData {
    std::vector<ToyExample> examples;
    std::size_t visual_dim = 0;
    std::size_t vocab_size = 0;
};

/// Tokenizes captions, builds chosen lists against `sig` and draws one LVWM
/// sample per record from a record-seeded stream.
ToyData prepare_toy_data(const std::vector<SynthRecord>& records, const Vocab& vocab, const SignificantVocab& sig,
                         std::size_t n_l, std::uint64_t seed);

struct ToyConfig {
    std::size_t dim = 32;
    std::size_t steps = 2000;
    /// Adam step size.
    double lr = 0.01;
    bool use_global = true;  // parameter-free global matching
    bool use_local = false;  // local vision-word matching
    /// 0 trains on the full set every step.
    std::size_t batch_size = 0;
    double scale = 1.0;
    double init_std = 0.1;
    std::uint64_t seed = 0;
};

struct LinearEncoders {
    Matrix64 visual_w;            // visual_dim x dim
    std::vector<double> visual_b;
    Matrix64 token_embedding;     // vocab_size x dim
    std::vector<double> text_b;

    Matrix64 encode_visual(const ToyData& data) const;
    /// Global text features: bag-weighted token embedding plus bias.
    Matrix64 encode_text(const ToyData& data) const;
};

struct ToyResult {
    LinearEncoders encoders;
    std::vector<double> loss_curve;
};

/// Trains both affine encoders with the analytic kernel gradients. Throws
/// DivergenceError with the step index on a non-finite loss and ArgumentError
/// when batch_size exceeds the data size or no loss is enabled.
ToyResult train_toy(const ToyData& data, const ToyConfig& config);

}  // namespace snps3
