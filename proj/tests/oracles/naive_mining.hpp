#pragma once

// Line-by-line transcription of the offline/online significant-semantic mining
// procedure, kept deliberately naive (1-based loops, linear list searches) so it
// shares nothing with the optimized miner beyond the tokenizer it is given.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace snps3::oracle {

struct NaiveCaption {
    std::vector<std::string> words;
    std::vector<std::string> tags;
};

struct NaiveVocabResult {
    std::vector<std::uint64_t> l_pos;
    std::uint64_t num_k = 0;
    std::vector<int> l_spacy;
};

inline std::string naive_lower(std::string s) {
    for (auto& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

inline bool naive_in(const std::vector<std::string>& list, const std::string& x) {
    for (std::size_t i = 1; i <= list.size(); ++i) {
        if (list[i - 1] == x) return true;
    }
    return false;
}

inline std::size_t naive_tolabel(const std::vector<std::string>& l_bert, const std::string& token) {
    for (std::size_t i = 1; i <= l_bert.size(); ++i) {
        if (l_bert[i - 1] == token) return i - 1;
    }
    return naive_tolabel(l_bert, "[UNK]");
}

/// K-th maximum of the list (duplicates counted); zero when K exceeds the length.
inline std::uint64_t get_maximum_k(std::vector<std::uint64_t> list, std::size_t k) {
    if (k > list.size()) return 0;
    std::sort(list.begin(), list.end(), std::greater<>());
    return list[k - 1];
}

inline NaiveVocabResult offline_mining(const std::vector<std::string>& l_bert, const std::vector<NaiveCaption>& caps,
                                       std::size_t k_ss) {
    NaiveVocabResult r;
    r.l_pos.assign(l_bert.size(), 0);
    for (std::size_t i = 1; i <= caps.size(); ++i) {
        const auto& t_spacy = caps[i - 1].words;
        const auto& p_spacy = caps[i - 1].tags;
        for (std::size_t j = 1; j <= t_spacy.size(); ++j) {
            const std::string word = naive_lower(t_spacy[j - 1]);
            if (naive_in(l_bert, word)) {
                const std::string& pos = p_spacy[j - 1];
                if (pos == "VERB" || pos == "ADJ" || pos == "NOUN") {
                    const std::size_t label = naive_tolabel(l_bert, word);
                    r.l_pos[label] += 1;
                }
            }
        }
    }
    r.num_k = get_maximum_k(r.l_pos, k_ss);
    r.l_spacy.assign(l_bert.size(), 0);
    for (std::size_t i = 1; i <= r.l_spacy.size(); ++i) {
        // Never-observed tokens stay out even when Num_K falls to zero.
        if (r.l_pos[i - 1] >= r.num_k && r.l_pos[i - 1] > 0) r.l_spacy[i - 1] = 1;
    }
    return r;
}

/// `t_bert` is the caption's WordPiece token strings without [CLS]/[SEP]; the
/// returned indices are 1-based into t_bert, which equals the 0-based position
/// in a sequence that starts with [CLS].
inline std::vector<std::size_t> online_mining(const std::vector<std::string>& l_bert, const std::vector<int>& l_spacy,
                                              const std::vector<std::string>& t_bert) {
    std::vector<std::size_t> l_ss;
    for (std::size_t i = 1; i <= t_bert.size(); ++i) {
        const std::size_t label = naive_tolabel(l_bert, t_bert[i - 1]);
        if (l_spacy[label] == 1) l_ss.push_back(i);
    }
    return l_ss;
}

}  // namespace snps3::oracle
