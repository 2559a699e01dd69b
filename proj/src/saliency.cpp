#include "salsum/saliency.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace salsum {

template <class Real>
TensorT<Real> score_tokens(const TensorT<Real>& encoder_output,
                           const TensorT<Real>& w1, const TensorT<Real>& b1) {
  auto raw = add_scalar(matmul(encoder_output, w1), b1);
  return reshape(sigmoid(raw), {encoder_output.dim(0)});
}

template <class Real>
TensorT<Real> saliency_loss(const TensorT<Real>& scores,
                            const std::vector<int>& labels) {
  return binary_cross_entropy(scores, labels);
}

template <class Real>
SaliencyScores materialize_scores(const TensorT<Real>& scores,
                                  SaliencyScores::Source source) {
  SaliencyScores out;
  out.source = source;
  out.values.reserve(scores.numel());
  for (Real v : scores.value())
    out.values.push_back(std::clamp(double(v), 1e-6, 1.0 - 1e-6));
  return out;
}

template <class Real>
ExtractorModel<Real>::ExtractorModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_([&] {
        cfg.validate();
        return cfg;
      }()),
      store_(seed),
      token_table_(store_.randn("tok_emb", {cfg.vocab_size, cfg.d_model},
                                Real(cfg.init_std))),
      encoder_(store_, "enc", cfg, token_table_),
      w1_(store_.randn("sal.w1", {cfg.d_model, 1}, Real(cfg.init_std))),
      b1_(store_.constant("sal.b1", {1}, Real(0))) {}

template <class Real>
TensorT<Real> ExtractorModel<Real>::score(const std::vector<int>& ids,
                                          const FwdCtx& ctx) const {
  return score_tokens(encoder_.forward(ids, cfg_, ctx), w1_, b1_);
}

std::vector<double> sentence_scores(
    const SaliencyScores& scores,
    const std::vector<std::pair<int64_t, int64_t>>& spans) {
  const int64_t total = static_cast<int64_t>(scores.values.size());
  int64_t expected_start = 0;
  for (auto [s, e] : spans) {
    if (s != expected_start || e <= s)
      throw std::invalid_argument(
          "sentence_scores: spans must partition the token range (span [" +
          std::to_string(s) + ", " + std::to_string(e) + ") after position " +
          std::to_string(expected_start) + ")");
    expected_start = e;
  }
  if (expected_start != total)
    throw std::invalid_argument(
        "sentence_scores: spans cover " + std::to_string(expected_start) +
        " of " + std::to_string(total) + " tokens");
  std::vector<double> out;
  out.reserve(spans.size());
  for (auto [s, e] : spans) {
    double sum = 0;
    for (int64_t i = s; i < e; ++i) sum += scores.values[i];
    out.push_back(sum / double(e - s));
  }
  return out;
}

std::vector<int64_t> top_k_indices(const TokenSeq& src,
                                   const SaliencyScores& scores, int64_t k,
                                   const ExtractFilter& filter) {
  if (static_cast<int64_t>(scores.values.size()) != src.size())
    throw std::invalid_argument("top_k_indices: " +
                                std::to_string(scores.values.size()) +
                                " scores for " + std::to_string(src.size()) +
                                " tokens");
  if (k < 0) throw std::invalid_argument("top_k_indices: negative k");

  std::vector<int64_t> order(src.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (scores.values[a] != scores.values[b])
      return scores.values[a] > scores.values[b];
    return a < b;
  });

  std::vector<int64_t> picked;
  std::unordered_set<std::string> seen;
  for (int64_t idx : order) {
    if (static_cast<int64_t>(picked.size()) == k) break;
    const std::string& surface = src.surfaces[idx];
    if (filter.drop_stopwords && stop_words().count(surface)) continue;
    if (filter.dedup_surfaces && !seen.insert(surface).second) continue;
    picked.push_back(idx);
  }
  std::sort(picked.begin(), picked.end());  // retain source order
  return picked;
}

TokenSeq extract_top_k_tokens(const TokenSeq& src, const SaliencyScores& scores,
                              int64_t k, const ExtractFilter& filter) {
  TokenSeq out;
  for (int64_t idx : top_k_indices(src, scores, k, filter)) {
    out.surfaces.push_back(src.surfaces[idx]);
    if (!src.ids.empty()) out.ids.push_back(src.ids[idx]);
  }
  if (!out.surfaces.empty()) out.sentences.emplace_back(0, out.size());
  return out;
}

TokenSeq extract_top_p_sentences(const TokenSeq& src,
                                 const std::vector<double>& sent_scores,
                                 int64_t p) {
  if (p < 1)
    throw std::invalid_argument("extract_top_p_sentences: p must be >= 1");
  if (sent_scores.size() != src.sentences.size())
    throw std::invalid_argument("extract_top_p_sentences: " +
                                std::to_string(sent_scores.size()) +
                                " scores for " +
                                std::to_string(src.sentences.size()) +
                                " sentences");
  const int64_t n = static_cast<int64_t>(sent_scores.size());
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    if (sent_scores[a] != sent_scores[b])
      return sent_scores[a] > sent_scores[b];
    return a < b;
  });
  order.resize(std::min(p, n));
  std::sort(order.begin(), order.end());  // document order

  TokenSeq out;
  for (int64_t j : order) {
    auto [s, e] = src.sentences[j];
    const int64_t start = out.size();
    for (int64_t i = s; i < e; ++i) {
      out.surfaces.push_back(src.surfaces[i]);
      if (!src.ids.empty()) out.ids.push_back(src.ids[i]);
    }
    out.sentences.emplace_back(start, out.size());
  }
  return out;
}

const std::unordered_set<std::string>& stop_words() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",  "above",   "after",   "again",   "against", "all",
      "am",      "an",     "and",     "any",     "are",     "aren't",  "as",
      "at",      "be",     "because", "been",    "before",  "being",   "below",
      "between", "both",   "but",     "by",      "can",     "cannot",  "could",
      "couldn't", "did",   "didn't",  "do",      "does",    "doesn't", "doing",
      "don't",   "down",   "during",  "each",    "few",     "for",     "from",
      "further", "had",    "hadn't",  "has",     "hasn't",  "have",    "haven't",
      "having",  "he",     "her",     "here",    "hers",    "herself", "him",
      "himself", "his",    "how",     "i",       "if",      "in",      "into",
      "is",      "isn't",  "it",      "its",     "itself",  "just",    "me",
      "more",    "most",   "my",      "myself",  "no",      "nor",     "not",
      "now",     "of",     "off",     "on",      "once",    "only",    "or",
      "other",   "ought",  "our",     "ours",    "ourselves", "out",   "over",
      "own",     "same",   "she",     "should",  "shouldn't", "so",    "some",
      "such",    "than",   "that",    "the",     "their",   "theirs",  "them",
      "themselves", "then", "there",  "these",   "they",    "this",    "those",
      "through", "to",     "too",     "under",   "until",   "up",      "very",
      "was",     "wasn't", "we",      "were",    "weren't", "what",    "when",
      "where",   "which",  "while",   "who",     "whom",    "why",     "will",
      "with",    "won't",  "would",   "wouldn't", "you",    "your",    "yours",
      "yourself", "yourselves", ".",  ",",       ";",       ":",       "!",
      "?",       "'",      "\"",      "(",       ")",       "-",
  };
  return words;
}

template TensorT<float> score_tokens(const TensorT<float>&,
                                     const TensorT<float>&,
                                     const TensorT<float>&);
template TensorT<double> score_tokens(const TensorT<double>&,
                                      const TensorT<double>&,
                                      const TensorT<double>&);
template TensorT<float> saliency_loss(const TensorT<float>&,
                                      const std::vector<int>&);
template TensorT<double> saliency_loss(const TensorT<double>&,
                                       const std::vector<int>&);
template SaliencyScores materialize_scores(const TensorT<float>&,
                                           SaliencyScores::Source);
template SaliencyScores materialize_scores(const TensorT<double>&,
                                           SaliencyScores::Source);
template class ExtractorModel<float>;
template class ExtractorModel<double>;

}  // namespace salsum
