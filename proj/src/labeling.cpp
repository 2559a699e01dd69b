#include "salsum/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "salsum/metrics.hpp"

namespace salsum {

PseudoLabels pseudo_labels(const TokenSeq& src, const TokenSeq& summary) {
  if (src.empty() || summary.empty())
    throw std::invalid_argument("pseudo_labels: empty sequence");
  const int64_t l = src.size(), t = summary.size();
  std::vector<std::vector<int32_t>> dp(l + 1, std::vector<int32_t>(t + 1, 0));
  for (int64_t i = 1; i <= l; ++i)
    for (int64_t j = 1; j <= t; ++j)
      dp[i][j] =
          src.surfaces[i - 1] == summary.surfaces[j - 1]
              ? dp[i - 1][j - 1] + 1
              : std::max(dp[i - 1][j], dp[i][j - 1]);

  // Dropping source suffix first pushes matches toward earlier source
  // positions among equal-length solutions.
  PseudoLabels out;
  out.labels.assign(l, 0);
  int64_t i = l, j = t;
  while (i > 0 && j > 0 && dp[i][j] > 0) {
    if (dp[i - 1][j] == dp[i][j]) {
      --i;
    } else if (dp[i][j - 1] == dp[i][j]) {
      --j;
    } else {
      out.labels[i - 1] = 1;
      out.alignment.emplace_back(i - 1, j - 1);
      --i;
      --j;
    }
  }
  std::reverse(out.alignment.begin(), out.alignment.end());
  return out;
}

std::vector<std::vector<std::string>> split_sentences(const TokenSeq& doc) {
  std::vector<std::vector<std::string>> out;
  for (auto [s, e] : doc.sentences)
    out.emplace_back(doc.surfaces.begin() + s, doc.surfaces.begin() + e);
  return out;
}

std::vector<int64_t> oracle_sentences(
    const std::vector<std::vector<std::string>>& sentences,
    const std::vector<std::string>& reference, int64_t max_sentences) {
  if (sentences.empty())
    throw std::invalid_argument("oracle_sentences: empty document");
  if (max_sentences < 1)
    throw std::invalid_argument("oracle_sentences: max_sentences must be >= 1");
  const int64_t n = static_cast<int64_t>(sentences.size());
  std::vector<bool> selected(n, false);
  std::vector<int64_t> picked;
  double best_f1 = 0.0;
  while (static_cast<int64_t>(picked.size()) < max_sentences) {
    int64_t best_j = -1;
    double best_gain = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (selected[j]) continue;
      std::vector<std::string> concat;
      for (int64_t s = 0; s < n; ++s)
        if (selected[s] || s == j)
          concat.insert(concat.end(), sentences[s].begin(),
                        sentences[s].end());
      const double f1 = rouge_l(concat, reference).f1;
      const double gain = f1 - best_f1;
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_j = j;
      }
    }
    if (best_j < 0 || best_gain <= 1e-12) break;
    selected[best_j] = true;
    picked.push_back(best_j);
    best_f1 += best_gain;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<int64_t> oracle_sentences(const TokenSeq& doc,
                                      const TokenSeq& reference,
                                      int64_t max_sentences) {
  return oracle_sentences(split_sentences(doc), reference.surfaces,
                          max_sentences);
}

int64_t average_oracle_size(
    const std::vector<std::vector<int64_t>>& oracles) {
  if (oracles.empty())
    throw std::invalid_argument("average_oracle_size: empty corpus");
  double total = 0;
  for (const auto& o : oracles) total += static_cast<double>(o.size());
  const double mean = total / static_cast<double>(oracles.size());
  return std::max<int64_t>(1, static_cast<int64_t>(std::floor(mean + 0.5)));
}

}  // namespace salsum
