#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace snps3 {

using TokenId = std::int32_t;

inline constexpr std::size_t kDefaultTextLength = 30;

struct SpecialIds {
    TokenId pad = -1;
    TokenId unk = -1;
    TokenId cls = -1;
    TokenId sep = -1;
    TokenId mask = -1;
};

/// Ordered WordPiece vocabulary. Ids are dense line indices; immutable once built.
class Vocab {
public:
    /// Builds from an ordered token list. Throws FormatError on duplicates and
    /// ConfigError when any of [PAD] [UNK] [CLS] [SEP] [MASK] is missing.
    explicit Vocab(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const SpecialIds& special() const { return special_; }

    /// -1 when absent.
    TokenId find(std::string_view token) const;
    bool contains(std::string_view token) const { return find(token) >= 0; }
    bool is_special(TokenId id) const;

    /// "sha256:<hex>" over the tokens, each terminated by '\n'.
    const std::string& hash() const { return hash_; }

private:
    struct StringHash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> index_;
    SpecialIds special_;
    std::string hash_;
};

/// One token per line, line index = id. Throws IoError if the file cannot be opened.
Vocab load_vocab(const std::filesystem::path& path);

/// Fixed-length tokenized caption: [CLS] pieces... [SEP] [PAD]...
struct TokenSeq {
    std::vector<TokenId> ids;
    /// Source word index per position, -1 for special and pad positions.
    std::vector<std::int32_t> word_index;
    std::vector<bool> is_special;
    /// Non-pad positions; ids[length - 1] is [SEP].
    std::size_t length = 0;
    std::string vocab_hash;

    std::size_t size() const { return ids.size(); }
};

/// Lowercases, splits on whitespace and punctuation. Shared by the tokenizer and
/// the untagged mining path so both see identical words.
std::vector<std::string> basic_split(std::string_view text);

/// Greedy longest-match-first WordPiece against `vocab`. Keeps the earliest
/// pieces when the caption overflows. Throws ArgumentError if max_len < 2.
TokenSeq wordpiece_tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len = kDefaultTextLength);

/// Id of `token`, or [UNK] when absent.
TokenId token_to_label(std::string_view token, const Vocab& vocab);

}  // namespace snps3
