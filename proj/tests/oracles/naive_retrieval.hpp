#pragma once

// Text-to-video ranking by fully sorting every candidate list. Ties go to the
// lower video index, which is what a stable sort on descending score gives.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

namespace snps3::oracle {

struct NaiveRetrieval {
    std::vector<std::size_t> ranks;
    double r1 = 0, r5 = 0, r10 = 0, mdr = 0;
};

inline NaiveRetrieval naive_retrieval(const std::vector<std::vector<double>>& vis,
                                      const std::vector<std::vector<double>>& txt) {
    const std::size_t n = vis.size();
    NaiveRetrieval out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> score(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < vis[j].size(); ++c) score[j] += txt[i][c] * vis[j][c];
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
        out.ranks.push_back(static_cast<std::size_t>(std::find(order.begin(), order.end(), i) - order.begin()) + 1);
    }
    auto recall = [&](std::size_t k) {
        std::size_t hits = 0;
        for (auto r : out.ranks) hits += r <= k ? 1 : 0;
        return static_cast<double>(hits) / static_cast<double>(n);
    };
    out.r1 = recall(1);
    out.r5 = recall(5);
    out.r10 = recall(10);
    std::vector<std::size_t> s = out.ranks;
    std::sort(s.begin(), s.end());
    out.mdr = n % 2 == 1 ? static_cast<double>(s[n / 2]) : (static_cast<double>(s[n / 2 - 1]) + static_cast<double>(s[n / 2])) / 2.0;
    return out;
}

}  // namespace snps3::oracle
