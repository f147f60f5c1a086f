#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snps3/semantic_miner.hpp"
#include "snps3/tokenizer.hpp"

namespace snps3 {

enum class MaskAction : std::uint8_t { Keep, ToMask, ToRandom, ToSelf };

/// Single-letter code used in plan.jsonl: K, M, R, S.
char action_code(MaskAction action);
MaskAction parse_action_code(char code);

inline constexpr double kDefaultMaskRate = 0.15;
inline constexpr std::size_t kDefaultLvwmSamples = 3;

/// Per-position corruption plan for one caption.
struct MaskingPlan {
    std::vector<MaskAction> actions;
    /// Original id wherever the action is not Keep.
    std::vector<std::optional<TokenId>> labels;
    /// Model input after applying the plan ([MASK], random id, or unchanged).
    std::vector<TokenId> input_ids;
    std::uint64_t seed_trace = 0;

    std::size_t masked_count() const;
};

/// Conventional MLM: every non-special, non-pad position is selected with
/// probability `rate`; selections become [MASK] / random token / unchanged in
/// 80/10/10 proportion. If nothing is selected one candidate is forced to [MASK].
MaskingPlan plan_mlm(const TokenSeq& seq, const Vocab& vocab, double rate, std::uint64_t seed);

/// MSSM: as plan_mlm with the candidate pool restricted to `chosen`. An empty
/// chosen list falls back to plan_mlm with the same seed.
MaskingPlan plan_mssm(const TokenSeq& seq, const ChosenList& chosen, const Vocab& vocab, double rate,
                      std::uint64_t seed);

struct LvwmSample {
    std::vector<std::size_t> indices;
};

/// Picks exactly n_l positions from `chosen`: without replacement when there are
/// more than n_l, all of them when equal, and every position once plus uniform
/// draws with replacement when fewer. Returns nullopt for an empty list, in
/// which case the caller skips the local term for that record.
std::optional<LvwmSample> sample_lvwm(const ChosenList& chosen, std::size_t n_l, std::uint64_t seed);

/// One plan.jsonl line (without trailing newline).
std::string plan_to_jsonl(const std::string& id, const MaskingPlan& plan);

struct PlanRecord {
    std::string id;
    MaskingPlan plan;
};

/// Reads plan.jsonl, skipping the header line.
std::vector<PlanRecord> read_plan_jsonl(const std::filesystem::path& path);

}  // namespace snps3
