#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "salsum/corpus.hpp"
#include "salsum/model.hpp"
#include "salsum/tensor.hpp"

namespace salsum {

// Materialized per-token scores, aligned to a TokenSeq. Values are clamped
// into the open unit interval so downstream renormalization stays safe.
struct SaliencyScores {
  enum class Source { SharedEncoder, Extractor };
  std::vector<double> values;
  Source source = Source::Extractor;
};

// Sigmoid of a linear projection of each encoder output row.
template <class Real>
TensorT<Real> score_tokens(const TensorT<Real>& encoder_output,
                           const TensorT<Real>& w1, const TensorT<Real>& b1);

// Mean binary cross entropy between scores and 0/1 labels.
template <class Real>
TensorT<Real> saliency_loss(const TensorT<Real>& scores,
                            const std::vector<int>& labels);

template <class Real>
SaliencyScores materialize_scores(const TensorT<Real>& scores,
                                  SaliencyScores::Source source);

// Standalone saliency model: its own encoder stack plus a scoring head,
// parameter-disjoint from any seq-to-seq model.
template <class Real>
class ExtractorModel {
 public:
  ExtractorModel(const ModelConfig& cfg, uint64_t seed);

  TensorT<Real> score(const std::vector<int>& ids,
                      const FwdCtx& ctx = {}) const;  // [L]

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Real>& params() { return store_; }
  const ParamStore<Real>& params() const { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore<Real> store_;
  TensorT<Real> token_table_;
  TransformerEncoderCore<Real> encoder_;
  TensorT<Real> w1_, b1_;
};

// Mean token score per sentence span; spans must partition [0, L).
std::vector<double> sentence_scores(
    const SaliencyScores& scores,
    const std::vector<std::pair<int64_t, int64_t>>& spans);

struct ExtractFilter {
  bool drop_stopwords = false;
  bool dedup_surfaces = false;  // keep the best-scoring occurrence
};

// Positions of the top-k tokens by score (ties to the earlier position),
// returned in source order. k larger than the eligible pool selects
// everything eligible.
std::vector<int64_t> top_k_indices(const TokenSeq& src,
                                   const SaliencyScores& scores, int64_t k,
                                   const ExtractFilter& filter = {});

// Top-k tokens as a sequence, in source order.
TokenSeq extract_top_k_tokens(const TokenSeq& src, const SaliencyScores& scores,
                              int64_t k, const ExtractFilter& filter = {});

// Top-p sentences by sentence score (ties to the earlier sentence),
// concatenated in document order.
TokenSeq extract_top_p_sentences(const TokenSeq& src,
                                 const std::vector<double>& sent_scores,
                                 int64_t p);

const std::unordered_set<std::string>& stop_words();

}  // namespace salsum
