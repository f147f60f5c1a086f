#include "snps3/tokenizer.hpp"

#include <fstream>

#include "snps3/errors.hpp"
#include "snps3/hash.hpp"

namespace snps3 {
namespace {

// Words longer than this (in bytes) map straight to [UNK], as in BERT.
constexpr std::size_t kMaxWordChars = 100;

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool is_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    std::string canonical;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) {
            throw FormatError("duplicate vocab token '" + tokens_[i] + "' at line " + std::to_string(i) +
                              " (first at line " + std::to_string(it->second) + ")");
        }
        canonical += tokens_[i];
        canonical += '\n';
    }
    auto require = [&](std::string_view name) {
        const TokenId id = find(name);
        if (id < 0) throw ConfigError("vocab is missing special token " + std::string(name));
        return id;
    };
    special_.pad = require("[PAD]");
    special_.unk = require("[UNK]");
    special_.cls = require("[CLS]");
    special_.sep = require("[SEP]");
    special_.mask = require("[MASK]");
    hash_ = content_hash(canonical);
}

TokenId Vocab::find(std::string_view token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

bool Vocab::is_special(TokenId id) const {
    return id == special_.pad || id == special_.unk || id == special_.cls || id == special_.sep ||
           id == special_.mask;
}

Vocab load_vocab(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocab file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(std::move(line));
    }
    return Vocab(std::move(tokens));
}

std::vector<std::string> basic_split(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
    };
    for (unsigned char c : text) {
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, static_cast<char>(c));
        } else {
            current.push_back(lower(c));
        }
    }
    flush();
    return words;
}

TokenSeq wordpiece_tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 2) throw ArgumentError("max_len must be at least 2, got " + std::to_string(max_len));
    const auto& sp = vocab.special();

    TokenSeq seq;
    seq.vocab_hash = vocab.hash();
    seq.ids.reserve(max_len);
    seq.word_index.reserve(max_len);
    seq.is_special.reserve(max_len);

    auto push = [&](TokenId id, std::int32_t word, bool special) {
        seq.ids.push_back(id);
        seq.word_index.push_back(word);
        seq.is_special.push_back(special);
    };
    push(sp.cls, -1, true);

    const std::size_t body_budget = max_len - 2;
    const auto words = basic_split(text);
    std::vector<TokenId> pieces;
    std::string candidate;
    for (std::size_t w = 0; w < words.size() && seq.ids.size() - 1 < body_budget; ++w) {
        const std::string& word = words[w];
        pieces.clear();
        bool unknown = word.size() > kMaxWordChars;
        std::size_t start = 0;
        while (!unknown && start < word.size()) {
            std::size_t end = word.size();
            TokenId match = -1;
            while (start < end) {
                candidate.assign(start > 0 ? "##" : "");
                candidate.append(word, start, end - start);
                match = vocab.find(candidate);
                if (match >= 0) break;
                --end;
            }
            if (match < 0) {
                unknown = true;
                break;
            }
            pieces.push_back(match);
            start = end;
        }
        if (unknown) {
            pieces.assign(1, sp.unk);
        }
        for (TokenId id : pieces) {
            if (seq.ids.size() - 1 >= body_budget) break;
            push(id, static_cast<std::int32_t>(w), false);
        }
    }
    push(sp.sep, -1, true);
    seq.length = seq.ids.size();
    while (seq.ids.size() < max_len) push(sp.pad, -1, true);
    return seq;
}

TokenId token_to_label(std::string_view token, const Vocab& vocab) {
    const TokenId id = vocab.find(token);
    return id >= 0 ? id : vocab.special().unk;
}

}  // namespace snps3
