#include "snps3/synth_harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jsonl.hpp"
#include "snps3/hash.hpp"
#include "snps3/loss_kernels.hpp"
#include "snps3/proxy_planner.hpp"
#include "snps3/rng.hpp"

namespace snps3 {
namespace {

const std::vector<std::string> kFunctionWords = {"a", "the", "and", "while", "near", "together", "quickly", "out",
                                                 "##doors", "slow", "##ly", "##s", "##ing", ".", ","};

const std::vector<std::string> kFillers = {"quickly", "slowly", "together", "outdoors"};

std::vector<std::size_t> draw_distinct(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
    pool.resize(k);
    return pool;
}

}  // namespace

const ConceptInventory& ConceptInventory::standard() {
    static const ConceptInventory inventory{
        {"dog", "cat", "boy", "girl", "man", "woman", "horse", "bird", "car", "ball", "plane", "boat", "child", "chef",
         "player", "train"},
        {"red", "blue", "green", "small", "big", "young", "old", "happy", "black", "white", "tall", "yellow"},
        {"runs", "jumps", "sits", "plays", "swims", "flies", "drives", "cooks", "sings", "eats", "lands", "walks"},
    };
    return inventory;
}

const std::string& ConceptInventory::word(std::size_t id) const {
    if (id < nouns.size()) return nouns[id];
    id -= nouns.size();
    if (id < adjectives.size()) return adjectives[id];
    return verbs.at(id - adjectives.size());
}

PosTag ConceptInventory::tag(std::size_t id) const {
    if (id < nouns.size()) return PosTag::NOUN;
    if (id < nouns.size() + adjectives.size()) return PosTag::ADJ;
    return PosTag::VERB;
}

Vocab synth_vocab() {
    std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    tokens.insert(tokens.end(), kFunctionWords.begin(), kFunctionWords.end());
    const auto& inv = ConceptInventory::standard();
    for (std::size_t c = 0; c < inv.size(); ++c) tokens.push_back(inv.word(c));
    return Vocab(std::move(tokens));
}

std::vector<SynthRecord> gen_corpus(std::uint64_t seed, std::size_t size, const Vocab& /*vocab*/,
                                    const SynthOptions& options) {
    if (size < 2) throw ArgumentError("gen_corpus: size must be at least 2");
    if (options.min_clauses < 1 || options.max_clauses < options.min_clauses) {
        throw ArgumentError("gen_corpus: invalid clause range");
    }
    const auto& inv = ConceptInventory::standard();
    const std::size_t n_noun = inv.nouns.size();
    const std::size_t n_adj = inv.adjectives.size();
    if (options.max_clauses > std::min({n_noun, n_adj, inv.verbs.size()})) {
        throw ArgumentError("gen_corpus: more clauses than distinct concepts");
    }

    Rng rng(seed);
    std::vector<SynthRecord> out;
    out.reserve(size);
    for (std::size_t r = 0; r < size; ++r) {
        SynthRecord rec;
        rec.id = "synth-" + std::to_string(r);
        const std::size_t clauses =
            options.min_clauses + rng.index(options.max_clauses - options.min_clauses + 1);
        const auto nouns = draw_distinct(rng, n_noun, clauses);
        const auto adjs = draw_distinct(rng, n_adj, clauses);
        const auto verbs = draw_distinct(rng, inv.verbs.size(), clauses);
        auto add = [&](const std::string& w, PosTag t) {
            rec.words.push_back(w);
            rec.tags.push_back(t);
        };
        for (std::size_t c = 0; c < clauses; ++c) {
            if (c > 0) add("and", PosTag::CCONJ);
            add(rng.index(2) == 0 ? "a" : "the", PosTag::DET);
            add(inv.adjectives[adjs[c]], PosTag::ADJ);
            add(inv.nouns[nouns[c]], PosTag::NOUN);
            add(inv.verbs[verbs[c]], PosTag::VERB);
            if (rng.index(3) == 0) add(kFillers[rng.index(kFillers.size())], PosTag::ADV);
            rec.concepts.push_back(nouns[c]);
            rec.concepts.push_back(n_noun + adjs[c]);
            rec.concepts.push_back(n_noun + n_adj + verbs[c]);
        }
        std::sort(rec.concepts.begin(), rec.concepts.end());
        for (std::size_t i = 0; i < rec.words.size(); ++i) {
            if (i > 0) rec.caption += ' ';
            rec.caption += rec.words[i];
        }
        rec.visual.assign(inv.size(), 0.0f);
        for (std::size_t c : rec.concepts) rec.visual[c] = 1.0f;
        for (float& x : rec.visual) x += static_cast<float>(options.visual_noise * rng.normal());
        out.push_back(std::move(rec));
    }
    return out;
}

PosCorpus to_pos_corpus(const std::vector<SynthRecord>& records) {
    PosCorpus corpus;
    corpus.reserve(records.size());
    for (const auto& r : records) corpus.push_back({r.id, r.words, r.tags});
    return corpus;
}

std::vector<CaptionRecord> to_caption_corpus(const std::vector<SynthRecord>& records) {
    std::vector<CaptionRecord> corpus;
    corpus.reserve(records.size());
    for (const auto& r : records) corpus.push_back({r.id, r.caption});
    return corpus;
}

FeatureMatrix visual_matrix(const std::vector<SynthRecord>& records) {
    if (records.empty()) return {};
    FeatureMatrix m(records.size(), records.front().visual.size());
    for (std::size_t i = 0; i < records.size(); ++i) std::copy(records[i].visual.begin(), records[i].visual.end(), m.row(i).begin());
    return m;
}

RetrievalMetrics eval_retrieval(const Matrix64& vis, const Matrix64& txt) {
    const std::size_t n = vis.rows();
    if (n == 0) throw ArgumentError("eval_retrieval: no pairs");
    if (txt.rows() != n || txt.cols() != vis.cols()) throw ArgumentError("eval_retrieval: shapes differ");

    RetrievalMetrics m;
    m.ranks.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = txt.row(i);
        auto score = [&](std::size_t j) {
            double s = 0.0;
            const auto v = vis.row(j);
            for (std::size_t c = 0; c < t.size(); ++c) s += t[c] * v[c];
            return s;
        };
        const double target = score(i);
        std::size_t rank = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double s = score(j);
            if (s > target || (s == target && j < i)) ++rank;
        }
        m.ranks[i] = rank;
    }
    for (std::size_t k : {1, 5, 10}) {
        const auto hits = std::count_if(m.ranks.begin(), m.ranks.end(), [k](std::size_t r) { return r <= k; });
        m.r_at[k] = static_cast<double>(hits) / static_cast<double>(n);
    }
    std::vector<std::size_t> sorted = m.ranks;
    std::sort(sorted.begin(), sorted.end());
    m.mdr = n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                       : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
    return m;
}

RetrievalMetrics eval_retrieval(const FeatureMatrix& vis, const FeatureMatrix& txt) {
    return eval_retrieval(Matrix64::cast(vis), Matrix64::cast(txt));
}

std::string metrics_to_json(const RetrievalMetrics& m) {
    detail::json j = {{"r1", m.recall(1)}, {"r5", m.recall(5)}, {"r10", m.recall(10)}, {"mdr", m.mdr}};
    return j.dump();
}

ToyData prepare_toy_data(const std::vector<SynthRecord>& records, const Vocab& vocab, const SignificantVocab& sig,
                         std::size_t n_l, std::uint64_t seed) {
    ToyData data;
    data.vocab_size = vocab.size();
    data.visual_dim = records.empty() ? 0 : records.front().visual.size();
    for (const auto& rec : records) {
        if (rec.visual.size() != data.visual_dim) throw ArgumentError("prepare_toy_data: ragged visual vectors");
        ToyExample ex;
        ex.visual = rec.visual;
        const TokenSeq seq = wordpiece_tokenize(rec.caption, vocab);
        std::size_t body = 0;
        for (std::size_t p = 0; p < seq.length; ++p) body += seq.is_special[p] ? 0 : 1;
        for (std::size_t p = 0; p < seq.length; ++p) {
            if (seq.is_special[p]) continue;
            ex.bag.emplace_back(seq.ids[p], 1.0 / static_cast<double>(body));
        }
        const ChosenList chosen = build_chosen_list(seq, sig);
        if (auto sample = sample_lvwm(chosen, n_l, record_seed(seed, rec.id))) {
            for (std::size_t pos : sample->indices) ex.local_tokens.push_back(seq.ids[pos]);
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

Matrix64 LinearEncoders::encode_visual(const ToyData& data) const {
    const std::size_t d = visual_w.cols();
    Matrix64 out(data.examples.size(), d);
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        auto row = out.row(i);
        std::copy(visual_b.begin(), visual_b.end(), row.begin());
        const auto& x = data.examples[i].visual;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const auto w = visual_w.row(k);
            for (std::size_t c = 0; c < d; ++c) row[c] += x[k] * w[c];
        }
    }
    return out;
}

Matrix64 LinearEncoders::encode_text(const ToyData& data) const {
    const std::size_t d = token_embedding.cols();
    Matrix64 out(data.examples.size(), d);
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
        auto row = out.row(i);
        std::copy(text_b.begin(), text_b.end(), row.begin());
        for (const auto& [id, weight] : data.examples[i].bag) {
            const auto e = token_embedding.row(static_cast<std::size_t>(id));
            for (std::size_t c = 0; c < d; ++c) row[c] += weight * e[c];
        }
    }
    return out;
}

namespace {

struct Adam {
    std::vector<double> m, v;
    void step(std::vector<double>& params, const std::vector<double>& grads, double lr, std::size_t t) {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grads[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grads[i] * grads[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
        }
    }
};

}  // namespace

ToyResult train_toy(const ToyData& data, const ToyConfig& config) {
    const std::size_t n = data.examples.size();
    const std::size_t d = config.dim;
    if (n == 0) throw ArgumentError("train_toy: empty training data");
    if (!config.use_global && !config.use_local) throw ArgumentError("train_toy: no loss enabled");
    if (config.batch_size > n) throw ArgumentError("train_toy: batch size exceeds corpus size");
    if (d == 0) throw ArgumentError("train_toy: dim must be positive");
    const std::size_t batch = config.batch_size == 0 ? n : config.batch_size;

    Rng rng(config.seed);
    ToyResult result;
    LinearEncoders& enc = result.encoders;
    enc.visual_w = Matrix64(data.visual_dim, d);
    enc.visual_b.assign(d, 0.0);
    enc.token_embedding = Matrix64(data.vocab_size, d);
    enc.text_b.assign(d, 0.0);
    for (double& w : enc.visual_w.data()) w = config.init_std * rng.normal();
    for (double& w : enc.token_embedding.data()) w = config.init_std * rng.normal();

    Adam adam_vw, adam_vb, adam_emb, adam_tb;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n;

    Matrix64 g_vw(data.visual_dim, d);
    std::vector<double> g_vb(d), g_tb(d);
    Matrix64 g_emb(data.vocab_size, d);

    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<std::size_t> idx;
        if (batch == n) {
            idx = order;
        } else {
            if (cursor + batch > n) {
                for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
                cursor = 0;
            }
            idx.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                       order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
            cursor += batch;
        }

        ToyData sub;
        sub.visual_dim = data.visual_dim;
        sub.vocab_size = data.vocab_size;
        for (std::size_t i : idx) sub.examples.push_back(data.examples[i]);
        const Matrix64 vis = enc.encode_visual(sub);
        const Matrix64 txt = enc.encode_text(sub);
        Matrix64 d_vis(idx.size(), d);
        Matrix64 d_txt(idx.size(), d);
        std::fill(g_emb.data().begin(), g_emb.data().end(), 0.0);
        std::fill(g_tb.begin(), g_tb.end(), 0.0);

        double loss = 0.0;
        if (config.use_global) {
            const LossResult r = gvtm_free(vis, txt, config.scale);
            loss += r.value;
            d_vis = r.grads[0];
            d_txt = r.grads[1];
        }
        if (config.use_local) {
            std::vector<std::size_t> rows;
            for (std::size_t b = 0; b < idx.size(); ++b) {
                if (!sub.examples[b].local_tokens.empty()) rows.push_back(b);
            }
            if (!rows.empty()) {
                const std::size_t n_l = sub.examples[rows.front()].local_tokens.size();
                Matrix64 vis_sub(rows.size(), d);
                TokenBlock64 tokens(rows.size(), n_l, d);
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    std::copy(vis.row(rows[r]).begin(), vis.row(rows[r]).end(), vis_sub.row(r).begin());
                    for (std::size_t l = 0; l < n_l; ++l) {
                        const auto id = static_cast<std::size_t>(sub.examples[rows[r]].local_tokens.at(l));
                        auto t = tokens.token(r, l);
                        for (std::size_t c = 0; c < d; ++c) t[c] = enc.token_embedding(id, c) + enc.text_b[c];
                    }
                }
                const LossResult r = lvwm(vis_sub, tokens, config.scale);
                loss += r.value;
                for (std::size_t k = 0; k < rows.size(); ++k) {
                    auto dst = d_vis.row(rows[k]);
                    const auto src = r.grads[0].row(k);
                    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    for (std::size_t l = 0; l < n_l; ++l) {
                        const auto id = static_cast<std::size_t>(sub.examples[rows[k]].local_tokens[l]);
                        const auto g = r.grads[1].row(k * n_l + l);
                        for (std::size_t c = 0; c < d; ++c) {
                            g_emb(id, c) += g[c];
                            g_tb[c] += g[c];
                        }
                    }
                }
            }
        }
        if (!std::isfinite(loss)) {
            throw DivergenceError(step, "train_toy: non-finite loss at step " + std::to_string(step));
        }
        result.loss_curve.push_back(loss);

        std::fill(g_vw.data().begin(), g_vw.data().end(), 0.0);
        std::fill(g_vb.begin(), g_vb.end(), 0.0);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto dv = d_vis.row(b);
            const auto& x = sub.examples[b].visual;
            for (std::size_t k = 0; k < x.size(); ++k) {
                auto gw = g_vw.row(k);
                for (std::size_t c = 0; c < d; ++c) gw[c] += x[k] * dv[c];
            }
            for (std::size_t c = 0; c < d; ++c) g_vb[c] += dv[c];
            const auto dt = d_txt.row(b);
            for (const auto& [id, weight] : sub.examples[b].bag) {
                auto ge = g_emb.row(static_cast<std::size_t>(id));
                for (std::size_t c = 0; c < d; ++c) ge[c] += weight * dt[c];
            }
            for (std::size_t c = 0; c < d; ++c) g_tb[c] += dt[c];
        }
        adam_vw.step(enc.visual_w.data(), g_vw.data(), config.lr, step + 1);
        adam_vb.step(enc.visual_b, g_vb, config.lr, step + 1);
        adam_emb.step(enc.token_embedding.data(), g_emb.data(), config.lr, step + 1);
        adam_tb.step(enc.text_b, g_tb, config.lr, step + 1);
    }
    return result;
}

}  // namespace snps3
