#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace salsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Clipped n-gram overlap, n in {1, 2}.
RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);

// Longest-common-subsequence F1 (beta = 1) over single token streams.
RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

int64_t lcs_length(const std::vector<std::string>& a,
                   const std::vector<std::string>& b);

struct CorpusRouge {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;
};

// Arithmetic mean of per-example P/R/F1.
CorpusRouge corpus_rouge(
    const std::vector<std::pair<std::vector<std::string>,
                                std::vector<std::string>>>& pairs,
    int jobs = 1);

}  // namespace salsum
