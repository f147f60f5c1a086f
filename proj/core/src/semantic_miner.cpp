#include "snps3/semantic_miner.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <thread>
#include <unordered_set>

#include "jsonl.hpp"
#include "snps3/errors.hpp"

namespace snps3 {
namespace {

constexpr std::array<std::string_view, 17> kTagNames = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
};

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

void count_range(const PosCorpus& corpus, std::size_t begin, std::size_t end, const Vocab& vocab,
                 std::vector<std::uint64_t>& counts) {
    for (std::size_t r = begin; r < end; ++r) {
        const PosRecord& rec = corpus[r];
        if (rec.words.size() != rec.tags.size()) {
            throw FormatError("record '" + rec.id + "' has " + std::to_string(rec.words.size()) + " words but " +
                              std::to_string(rec.tags.size()) + " tags");
        }
        for (std::size_t j = 0; j < rec.words.size(); ++j) {
            if (!is_significant(rec.tags[j])) continue;
            const TokenId id = vocab.find(ascii_lower(rec.words[j]));
            if (id >= 0) ++counts[static_cast<std::size_t>(id)];
        }
    }
}

}  // namespace

std::string_view to_string(PosTag tag) { return kTagNames[static_cast<std::size_t>(tag)]; }

PosTag parse_pos_tag(std::string_view name) {
    for (std::size_t i = 0; i < kTagNames.size(); ++i) {
        if (kTagNames[i] == name) return static_cast<PosTag>(i);
    }
    throw FormatError("unknown POS tag '" + std::string(name) + "'");
}

std::vector<PosTag> lexicon_pos_tag(const std::vector<std::string>& words, const Lexicon& lexicon) {
    std::vector<PosTag> tags;
    tags.reserve(words.size());
    for (const auto& w : words) {
        auto it = lexicon.find(w);
        tags.push_back(it == lexicon.end() ? PosTag::X : it->second);
    }
    return tags;
}

FrequencyTable& FrequencyTable::merge(const FrequencyTable& other) {
    if (other.vocab_hash != vocab_hash || other.counts.size() != counts.size()) {
        throw ConsistencyError("cannot merge frequency tables built on different vocabularies (" + vocab_hash +
                               " vs " + other.vocab_hash + ")");
    }
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
}

std::vector<TokenId> SignificantVocab::ids() const {
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.push_back(static_cast<TokenId>(i));
    }
    return out;
}

FrequencyTable empty_frequency_table(const Vocab& vocab) {
    return FrequencyTable{std::vector<std::uint64_t>(vocab.size(), 0), vocab.hash()};
}

FrequencyTable count_significant(const PosCorpus& corpus, const Vocab& vocab, unsigned workers) {
    FrequencyTable table = empty_frequency_table(vocab);
    const std::size_t n = corpus.size();
    const std::size_t shards = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (shards == 1) {
        count_range(corpus, 0, n, vocab, table.counts);
        return table;
    }

    std::vector<FrequencyTable> partial(shards, table);
    std::vector<std::exception_ptr> failures(shards);
    std::vector<std::jthread> threads;
    threads.reserve(shards);
    for (std::size_t s = 0; s < shards; ++s) {
        const std::size_t begin = n * s / shards;
        const std::size_t end = n * (s + 1) / shards;
        threads.emplace_back([&, s, begin, end] {
            try {
                count_range(corpus, begin, end, vocab, partial[s].counts);
            } catch (...) {
                failures[s] = std::current_exception();
            }
        });
    }
    threads.clear();
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
    for (const auto& p : partial) table.merge(p);
    return table;
}

SignificantVocab threshold_topk(const FrequencyTable& freq, std::size_t k_ss) {
    if (k_ss < 1) throw ArgumentError("k_ss must be at least 1");
    SignificantVocab sig;
    sig.k_ss = k_ss;
    sig.vocab_hash = freq.vocab_hash;
    sig.mask.assign(freq.counts.size(), false);

    // k-th largest of the multiset, padded with zeros when k exceeds its size.
    std::uint64_t threshold = 0;
    if (k_ss <= freq.counts.size()) {
        std::vector<std::uint64_t> sorted = freq.counts;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k_ss - 1), sorted.end(),
                         std::greater<>());
        threshold = sorted[k_ss - 1];
    }
    sig.threshold = threshold;
    for (std::size_t i = 0; i < freq.counts.size(); ++i) {
        sig.mask[i] = freq.counts[i] > 0 && freq.counts[i] >= threshold;
    }
    return sig;
}

ChosenList build_chosen_list(const TokenSeq& seq, const SignificantVocab& sig) {
    if (seq.vocab_hash != sig.vocab_hash) {
        throw ConsistencyError("token sequence vocab " + seq.vocab_hash + " does not match significant vocab " +
                               sig.vocab_hash);
    }
    ChosenList chosen;
    for (std::size_t i = 0; i < seq.length; ++i) {
        if (seq.is_special[i]) continue;
        const auto id = static_cast<std::size_t>(seq.ids[i]);
        if (id < sig.mask.size() && sig.mask[id]) chosen.positions.push_back(i);
    }
    return chosen;
}

PosCorpus dedup_records(PosCorpus corpus) {
    std::unordered_set<std::string> seen;
    PosCorpus out;
    for (auto& rec : corpus) {
        std::string key;
        for (std::size_t i = 0; i < rec.words.size(); ++i) {
            key += rec.words[i];
            key += '\x1f';
            key += i < rec.tags.size() ? to_string(rec.tags[i]) : "";
            key += '\x1e';
        }
        if (seen.insert(std::move(key)).second) out.push_back(std::move(rec));
    }
    return out;
}

std::vector<CaptionRecord> dedup_records(std::vector<CaptionRecord> corpus) {
    std::unordered_set<std::string> seen;
    std::vector<CaptionRecord> out;
    for (auto& rec : corpus) {
        if (seen.insert(rec.caption).second) out.push_back(std::move(rec));
    }
    return out;
}

PosCorpus read_pos_jsonl(const std::filesystem::path& path) {
    PosCorpus corpus;
    detail::for_each_jsonl(path, [&](const detail::json& j, std::size_t line_no) {
        PosRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.words = j.at("words").get<std::vector<std::string>>();
        for (const auto& t : j.at("tags")) rec.tags.push_back(parse_pos_tag(t.get<std::string>()));
        if (rec.words.size() != rec.tags.size()) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": words and tags differ in length");
        }
        corpus.push_back(std::move(rec));
    });
    return corpus;
}

void write_pos_jsonl(const std::filesystem::path& path, const PosCorpus& corpus) {
    auto out = detail::open_out(path);
    for (const auto& rec : corpus) {
        detail::json tags = detail::json::array();
        for (auto t : rec.tags) tags.push_back(std::string(to_string(t)));
        detail::json j = {{"id", rec.id}, {"words", rec.words}, {"tags", std::move(tags)}};
        out << j.dump() << '\n';
    }
}

std::vector<CaptionRecord> read_corpus_jsonl(const std::filesystem::path& path) {
    std::vector<CaptionRecord> corpus;
    detail::for_each_jsonl(path, [&](const detail::json& j, std::size_t) {
        corpus.push_back({j.at("id").get<std::string>(), j.at("caption").get<std::string>()});
    });
    return corpus;
}

void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<CaptionRecord>& corpus) {
    auto out = detail::open_out(path);
    for (const auto& rec : corpus) {
        out << detail::json{{"id", rec.id}, {"caption", rec.caption}}.dump() << '\n';
    }
}

Lexicon read_lexicon_json(const std::filesystem::path& path) {
    const auto j = detail::read_json_file(path);
    if (!j.is_object()) throw FormatError(path.string() + ": lexicon must be a JSON object");
    Lexicon lex;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_string()) throw FormatError(path.string() + ": tag for '" + it.key() + "' is not a string");
        lex.emplace(it.key(), parse_pos_tag(it.value().get<std::string>()));
    }
    return lex;
}

std::string sigvocab_to_json(const SignificantVocab& sig) {
    detail::json j = {
        {"k_ss", sig.k_ss},
        {"threshold", sig.threshold},
        {"vocab_hash", sig.vocab_hash},
        {"ids", sig.ids()},
    };
    return j.dump();
}

void write_sigvocab_json(const std::filesystem::path& path, const SignificantVocab& sig) {
    auto out = detail::open_out(path);
    out << sigvocab_to_json(sig) << '\n';
}

SignificantVocab read_sigvocab_json(const std::filesystem::path& path, std::size_t vocab_size) {
    const auto j = detail::read_json_file(path);
    SignificantVocab sig;
    try {
        sig.k_ss = j.at("k_ss").get<std::size_t>();
        sig.threshold = j.at("threshold").get<std::uint64_t>();
        sig.vocab_hash = j.at("vocab_hash").get<std::string>();
        sig.mask.assign(vocab_size, false);
        for (const auto& id : j.at("ids")) {
            const auto i = id.get<std::int64_t>();
            if (i < 0 || static_cast<std::size_t>(i) >= vocab_size) {
                throw FormatError(path.string() + ": significant id " + std::to_string(i) + " out of range");
            }
            sig.mask[static_cast<std::size_t>(i)] = true;
        }
    } catch (const detail::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return sig;
}

}  // namespace snps3
