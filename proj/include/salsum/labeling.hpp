#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "salsum/corpus.hpp"

namespace salsum {

// Per-token binary saliency supervision derived by aligning source and
// summary. Source tokens on the longest common subsequence get label 1;
// alignment pairs are (source index, summary index), strictly increasing
// on both sides.
struct PseudoLabels {
  std::vector<int> labels;
  std::vector<std::pair<int64_t, int64_t>> alignment;
};

// LCS over exact tokens; among equal-length solutions the backtrace prefers
// earlier source positions.
PseudoLabels pseudo_labels(const TokenSeq& src, const TokenSeq& summary);

// Greedy forward selection of the sentence subset whose document-order
// concatenation maximizes ROUGE-L F1 against the reference. Stops after
// max_sentences picks or when no sentence adds positive gain. Returned
// indices are strictly increasing.
std::vector<int64_t> oracle_sentences(
    const std::vector<std::vector<std::string>>& sentences,
    const std::vector<std::string>& reference, int64_t max_sentences);

// Convenience overload working off a TokenSeq's sentence spans.
std::vector<int64_t> oracle_sentences(const TokenSeq& doc,
                                      const TokenSeq& reference,
                                      int64_t max_sentences);

// Mean selected-set size, rounded half up, floored at 1.
int64_t average_oracle_size(const std::vector<std::vector<int64_t>>& oracles);

std::vector<std::vector<std::string>> split_sentences(const TokenSeq& doc);

}  // namespace salsum
