#pragma once

// Brute-force reference implementations used by the verification suite and
// the tests. These deliberately avoid the dynamic programs they check:
// LCS by subsequence enumeration, oracle selection by exhaustive subset
// search. Only usable at small sizes.

#include <cstdint>
#include <string>
#include <vector>

#include "salsum/metrics.hpp"

namespace salsum::oracles {

template <class Tok>
bool is_subsequence(const std::vector<Tok>& needle,
                    const std::vector<Tok>& haystack) {
  size_t i = 0;
  for (const auto& t : haystack) {
    if (i < needle.size() && needle[i] == t) ++i;
  }
  return i == needle.size();
}

// Max length over all subsequences of the shorter side that also occur in
// the longer side. O(2^min(|a|,|b|) * (|a|+|b|)).
template <class Tok>
int64_t brute_force_lcs(const std::vector<Tok>& a, const std::vector<Tok>& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  if (small.size() > 20)
    throw std::invalid_argument("brute_force_lcs: sequence too long");
  const uint64_t limit = uint64_t(1) << small.size();
  int64_t best = 0;
  for (uint64_t mask = 0; mask < limit; ++mask) {
    std::vector<Tok> sub;
    for (size_t i = 0; i < small.size(); ++i)
      if (mask >> i & 1) sub.push_back(small[i]);
    if (static_cast<int64_t>(sub.size()) > best &&
        is_subsequence(sub, large))
      best = static_cast<int64_t>(sub.size());
  }
  return best;
}

// Best ROUGE-L F1 achievable by any sentence subset of size <= max_size,
// concatenated in document order.
inline double exhaustive_best_rouge_l(
    const std::vector<std::vector<std::string>>& sentences,
    const std::vector<std::string>& reference, int64_t max_size) {
  const size_t n = sentences.size();
  if (n > 16)
    throw std::invalid_argument("exhaustive_best_rouge_l: too many sentences");
  double best = 0.0;
  for (uint64_t mask = 0; mask < (uint64_t(1) << n); ++mask) {
    if (static_cast<int64_t>(__builtin_popcountll(mask)) > max_size) continue;
    std::vector<std::string> concat;
    for (size_t i = 0; i < n; ++i)
      if (mask >> i & 1)
        concat.insert(concat.end(), sentences[i].begin(), sentences[i].end());
    best = std::max(best, rouge_l(concat, reference).f1);
  }
  return best;
}

}  // namespace salsum::oracles
