#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "snps3/tokenizer.hpp"

namespace snps3 {

/// Universal POS tag set.
enum class PosTag : std::uint8_t {
    ADJ, ADP, ADV, AUX, CCONJ, DET, INTJ, NOUN, NUM, PART, PRON, PROPN, PUNCT, SCONJ, SYM, VERB, X,
};

std::string_view to_string(PosTag tag);
/// Throws FormatError for names outside the tag set.
PosTag parse_pos_tag(std::string_view name);

/// VERB, ADJ and NOUN carry significant semantics.
constexpr bool is_significant(PosTag tag) {
    return tag == PosTag::VERB || tag == PosTag::ADJ || tag == PosTag::NOUN;
}

struct PosRecord {
    std::string id;
    std::vector<std::string> words;
    std::vector<PosTag> tags;
};

using PosCorpus = std::vector<PosRecord>;

struct CaptionRecord {
    std::string id;
    std::string caption;
};

using Lexicon = std::unordered_map<std::string, PosTag>;

/// Per-word lookup; words absent from the lexicon are tagged X.
std::vector<PosTag> lexicon_pos_tag(const std::vector<std::string>& words, const Lexicon& lexicon);

/// Occurrence counts of significant whole words, indexed by vocab id.
struct FrequencyTable {
    std::vector<std::uint64_t> counts;
    std::string vocab_hash;

    /// Element-wise sum. Throws ConsistencyError when the tables index different vocabularies.
    FrequencyTable& merge(const FrequencyTable& other);
};

struct SignificantVocab {
    std::vector<bool> mask;
    std::size_t k_ss = 0;
    std::uint64_t threshold = 0;
    std::string vocab_hash;

    /// Significant ids in ascending order.
    std::vector<TokenId> ids() const;
};

struct ChosenList {
    std::vector<std::size_t> positions;
};

inline constexpr std::size_t kDefaultSignificantVocabSize = 2000;

FrequencyTable empty_frequency_table(const Vocab& vocab);

/// Counts every occurrence of a VERB/ADJ/NOUN word whose lowercased form is a
/// whole vocab token. `workers` > 1 splits the corpus into contiguous shards;
/// the result does not depend on the worker count. Throws FormatError when a
/// record's words and tags differ in length.
FrequencyTable count_significant(const PosCorpus& corpus, const Vocab& vocab, unsigned workers = 1);

/// Keeps every token whose count reaches the k_ss-th largest count. Ties at the
/// threshold are all kept. Zero counts are never significant.
SignificantVocab threshold_topk(const FrequencyTable& freq, std::size_t k_ss = kDefaultSignificantVocabSize);

/// Ascending positions of non-special, non-pad tokens whose id is significant.
/// Throws ConsistencyError when `seq` and `sig` come from different vocabularies.
ChosenList build_chosen_list(const TokenSeq& seq, const SignificantVocab& sig);

/// Drops records whose content repeats an earlier record (first occurrence wins).
PosCorpus dedup_records(PosCorpus corpus);
std::vector<CaptionRecord> dedup_records(std::vector<CaptionRecord> corpus);

// File formats ------------------------------------------------------------

/// pos.jsonl: {"id","words","tags"} per line.
PosCorpus read_pos_jsonl(const std::filesystem::path& path);
void write_pos_jsonl(const std::filesystem::path& path, const PosCorpus& corpus);

/// corpus.jsonl: {"id","caption"} per line.
std::vector<CaptionRecord> read_corpus_jsonl(const std::filesystem::path& path);
void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<CaptionRecord>& corpus);

/// Lexicon JSON: {"word": "TAG", ...}.
Lexicon read_lexicon_json(const std::filesystem::path& path);

/// sigvocab.json: {"k_ss","threshold","vocab_hash","ids"}. Reading needs the
/// vocab size to rebuild the mask; ids out of range raise FormatError.
std::string sigvocab_to_json(const SignificantVocab& sig);
void write_sigvocab_json(const std::filesystem::path& path, const SignificantVocab& sig);
SignificantVocab read_sigvocab_json(const std::filesystem::path& path, std::size_t vocab_size);

}  // namespace snps3
