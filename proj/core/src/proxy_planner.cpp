#include "snps3/proxy_planner.hpp"

#include <algorithm>
#include <numeric>

#include "jsonl.hpp"
#include "snps3/errors.hpp"
#include "snps3/rng.hpp"

namespace snps3 {
namespace {

std::vector<std::size_t> all_candidates(const TokenSeq& seq, const Vocab& vocab) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < seq.length; ++i) {
        if (seq.is_special[i]) continue;
        const TokenId id = seq.ids[i];
        const auto& sp = vocab.special();
        if (id == sp.cls || id == sp.sep || id == sp.pad || id == sp.mask) continue;
        out.push_back(i);
    }
    return out;
}

// Random replacements never produce special tokens.
TokenId random_token(Rng& rng, const Vocab& vocab) {
    const auto v = static_cast<std::uint64_t>(vocab.size());
    while (true) {
        const auto id = static_cast<TokenId>(rng.index(v));
        if (!vocab.is_special(id)) return id;
    }
}

MaskingPlan plan_over(const TokenSeq& seq, const std::vector<std::size_t>& candidates, const Vocab& vocab,
                      double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ArgumentError("mask rate must lie in [0, 1]");
    if (seq.vocab_hash != vocab.hash()) throw ConsistencyError("token sequence was produced by a different vocab");

    MaskingPlan plan;
    plan.seed_trace = seed;
    plan.actions.assign(seq.size(), MaskAction::Keep);
    plan.labels.assign(seq.size(), std::nullopt);
    plan.input_ids = seq.ids;

    Rng rng(seed);
    std::vector<std::size_t> selected;
    for (std::size_t pos : candidates) {
        if (rng.uniform() < rate) selected.push_back(pos);
    }
    for (std::size_t pos : selected) {
        const double u = rng.uniform();
        MaskAction action = u < 0.8 ? MaskAction::ToMask : (u < 0.9 ? MaskAction::ToRandom : MaskAction::ToSelf);
        plan.actions[pos] = action;
        plan.labels[pos] = seq.ids[pos];
        if (action == MaskAction::ToMask) {
            plan.input_ids[pos] = vocab.special().mask;
        } else if (action == MaskAction::ToRandom) {
            plan.input_ids[pos] = random_token(rng, vocab);
        }
    }
    if (selected.empty() && !candidates.empty()) {
        const std::size_t pos = candidates[rng.index(candidates.size())];
        plan.actions[pos] = MaskAction::ToMask;
        plan.labels[pos] = seq.ids[pos];
        plan.input_ids[pos] = vocab.special().mask;
    }
    return plan;
}

}  // namespace

char action_code(MaskAction action) {
    switch (action) {
        case MaskAction::Keep: return 'K';
        case MaskAction::ToMask: return 'M';
        case MaskAction::ToRandom: return 'R';
        case MaskAction::ToSelf: return 'S';
    }
    return '?';
}

MaskAction parse_action_code(char code) {
    switch (code) {
        case 'K': return MaskAction::Keep;
        case 'M': return MaskAction::ToMask;
        case 'R': return MaskAction::ToRandom;
        case 'S': return MaskAction::ToSelf;
        default: throw FormatError(std::string("unknown mask action code '") + code + "'");
    }
}

std::size_t MaskingPlan::masked_count() const {
    return static_cast<std::size_t>(std::count_if(actions.begin(), actions.end(),
                                                  [](MaskAction a) { return a != MaskAction::Keep; }));
}

MaskingPlan plan_mlm(const TokenSeq& seq, const Vocab& vocab, double rate, std::uint64_t seed) {
    return plan_over(seq, all_candidates(seq, vocab), vocab, rate, seed);
}

MaskingPlan plan_mssm(const TokenSeq& seq, const ChosenList& chosen, const Vocab& vocab, double rate,
                      std::uint64_t seed) {
    if (chosen.positions.empty()) return plan_mlm(seq, vocab, rate, seed);
    const auto pool = all_candidates(seq, vocab);
    for (std::size_t pos : chosen.positions) {
        if (!std::binary_search(pool.begin(), pool.end(), pos)) {
            throw ConsistencyError("chosen position " + std::to_string(pos) + " is not a maskable token");
        }
    }
    return plan_over(seq, chosen.positions, vocab, rate, seed);
}

std::optional<LvwmSample> sample_lvwm(const ChosenList& chosen, std::size_t n_l, std::uint64_t seed) {
    if (n_l < 1) throw ArgumentError("n_l must be at least 1");
    const auto& pos = chosen.positions;
    if (pos.empty()) return std::nullopt;

    Rng rng(seed);
    LvwmSample sample;
    if (pos.size() > n_l) {
        std::vector<std::size_t> pool = pos;
        for (std::size_t i = 0; i < n_l; ++i) {
            const std::size_t j = i + rng.index(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        sample.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_l));
    } else {
        sample.indices = pos;
        while (sample.indices.size() < n_l) sample.indices.push_back(pos[rng.index(pos.size())]);
    }
    std::sort(sample.indices.begin(), sample.indices.end());
    return sample;
}

std::string plan_to_jsonl(const std::string& id, const MaskingPlan& plan) {
    std::string actions;
    actions.reserve(plan.actions.size());
    for (auto a : plan.actions) actions.push_back(action_code(a));
    detail::json labels = detail::json::array();
    for (const auto& l : plan.labels) {
        if (l) {
            labels.push_back(*l);
        } else {
            labels.push_back(nullptr);
        }
    }
    detail::json j = {
        {"id", id},
        {"token_ids", plan.input_ids},
        {"actions", actions},
        {"labels", std::move(labels)},
        {"seed_trace", plan.seed_trace},
    };
    return j.dump();
}

std::vector<PlanRecord> read_plan_jsonl(const std::filesystem::path& path) {
    std::vector<PlanRecord> out;
    detail::for_each_jsonl(path, [&](const detail::json& j, std::size_t line_no) {
        PlanRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.plan.input_ids = j.at("token_ids").get<std::vector<TokenId>>();
        for (char c : j.at("actions").get<std::string>()) rec.plan.actions.push_back(parse_action_code(c));
        for (const auto& l : j.at("labels")) {
            rec.plan.labels.push_back(l.is_null() ? std::nullopt : std::optional<TokenId>(l.get<TokenId>()));
        }
        rec.plan.seed_trace = j.at("seed_trace").get<std::uint64_t>();
        const auto n = rec.plan.input_ids.size();
        if (rec.plan.actions.size() != n || rec.plan.labels.size() != n) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": field lengths disagree");
        }
        out.push_back(std::move(rec));
    });
    return out;
}

}  // namespace snps3
