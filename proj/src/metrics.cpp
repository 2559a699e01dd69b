#include "salsum/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace salsum {

namespace {

double f1_of(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0; }

std::unordered_map<std::string, int64_t> ngram_counts(
    const std::vector<std::string>& toks, int n) {
  std::unordered_map<std::string, int64_t> counts;
  if (static_cast<int64_t>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');  // unit separator, cannot appear in a token
      key += toks[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
  if (n != 1 && n != 2)
    throw std::invalid_argument("rouge_n: n must be 1 or 2");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  int64_t cand_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [_, c] : cand) cand_total += c;
  for (const auto& [_, c] : ref) ref_total += c;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  RougeScore s;
  s.precision = cand_total > 0 ? double(overlap) / double(cand_total) : 0.0;
  s.recall = ref_total > 0 ? double(overlap) / double(ref_total) : 0.0;
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

int64_t lcs_length(const std::vector<std::string>& a,
                   const std::vector<std::string>& b) {
  const size_t la = a.size(), lb = b.size();
  if (la == 0 || lb == 0) return 0;
  std::vector<int64_t> prev(lb + 1, 0), cur(lb + 1, 0);
  for (size_t i = 1; i <= la; ++i) {
    for (size_t j = 1; j <= lb; ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[lb];
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  const int64_t l = lcs_length(candidate, reference);
  RougeScore s;
  s.precision = candidate.empty() ? 0.0 : double(l) / double(candidate.size());
  s.recall = reference.empty() ? 0.0 : double(l) / double(reference.size());
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

CorpusRouge corpus_rouge(
    const std::vector<std::pair<std::vector<std::string>,
                                std::vector<std::string>>>& pairs,
    int jobs) {
  if (pairs.empty())
    throw std::invalid_argument("corpus_rouge: empty evaluation set");
  const int64_t n = static_cast<int64_t>(pairs.size());
  std::vector<CorpusRouge> per(n);
#pragma omp parallel for schedule(static) num_threads(jobs > 0 ? jobs : 1)
  for (int64_t i = 0; i < n; ++i) {
    per[i].rouge1 = rouge_n(pairs[i].first, pairs[i].second, 1);
    per[i].rouge2 = rouge_n(pairs[i].first, pairs[i].second, 2);
    per[i].rougeL = rouge_l(pairs[i].first, pairs[i].second);
  }
  CorpusRouge total;
  auto acc = [n](RougeScore& dst, const RougeScore& src) {
    dst.precision += src.precision / double(n);
    dst.recall += src.recall / double(n);
    dst.f1 += src.f1 / double(n);
  };
  for (const auto& p : per) {
    acc(total.rouge1, p.rouge1);
    acc(total.rouge2, p.rouge2);
    acc(total.rougeL, p.rougeL);
  }
  return total;
}

}  // namespace salsum
