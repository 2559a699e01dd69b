#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salsum/corpus.hpp"
#include "salsum/labeling.hpp"
#include "salsum/model.hpp"
#include "salsum/optimizer.hpp"
#include "salsum/saliency.hpp"
#include "salsum/strategy.hpp"

namespace salsum {

// Loss components reported by each strategy, spelled the way loss logs
// print them.
std::vector<std::string> abs_loss_terms(Strategy s);  // {"L_sum"[,"L_sal"]}
std::vector<std::string> ext_loss_terms(Strategy s);  // {} or {"L_sal"}

// One training example after strategy-specific input construction.
struct PreparedExample {
  std::vector<int> input_ids;   // encoder input: X, X_s, or C <sep> X
  TokenSeq input_tokens;        // surfaces aligned with input_ids
  std::vector<int> target_ids;  // reference summary ids (no BOS/EOS)
  std::vector<int> labels;      // saliency labels on input_ids (MT family)
  std::vector<int> src_ids;     // plain X ids (extractor supervision)
  std::vector<int> src_labels;  // pseudo labels on X
  int64_t cit_prefix_len = 0;   // tokens of C before the separator
};

template <class Real>
struct ExampleTrace {
  TensorT<Real> enc_hidden;                 // what the scoring head read
  std::optional<TensorT<Real>> scores;      // shared-head scores, if any
  std::vector<std::vector<TensorT<Real>>> context_attn;  // [layer][head]
};

template <class Real>
struct LossGraph {
  TensorT<Real> l_sum;
  std::optional<TensorT<Real>> l_sal;
  TensorT<Real> l_abs;
  std::vector<ExampleTrace<Real>> traces;
};

struct LossReport {
  double l_sum = 0;
  std::optional<double> l_sal;
  double l_abs = 0;
};

struct GenerationResult {
  TokenSeq summary;
  std::optional<TokenSeq> selected_tokens;  // C for the CIT family
};

uint64_t derive_seed(uint64_t master, const std::string& tag);

// The seq-to-seq model, its optional shared scoring head, and the optional
// extractor, wired per the strategy table.
template <class Real>
class SummarizationSystem {
 public:
  SummarizationSystem(const ModelConfig& cfg, Vocabulary vocab, uint64_t seed);

  Strategy strategy() const { return cfg_.strategy; }
  const StrategyTraits& traits() const { return strategy_traits(cfg_.strategy); }
  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  TransformerModel<Real>& seq2seq() { return seq2seq_; }
  const TransformerModel<Real>& seq2seq() const { return seq2seq_; }
  bool has_extractor() const { return extractor_ != nullptr; }
  ExtractorModel<Real>& extractor();
  const ExtractorModel<Real>& extractor() const;

  // Encoder states scaled per row by their saliency score.
  static EncoderState<Real> se_weight(const EncoderState<Real>& enc,
                                      const TensorT<Real>& scores);
  // Attention rows reweighted elementwise by scores and renormalized.
  static TensorT<Real> sa_weight(const TensorT<Real>& attn_rows,
                                 const TensorT<Real>& scores);

  // Top-K / top-P knobs for the extractor strategies.
  void set_cit_k(int64_t k) { cit_k_ = k; }
  int64_t cit_k() const { return cit_k_; }
  void set_seg_p(int64_t p) { seg_p_ = p; }
  int64_t seg_p() const { return seg_p_; }
  void set_filter(ExtractFilter f) { filter_ = f; }
  const ExtractFilter& filter() const { return filter_; }

  // Frozen extractor scores for a tokenized source.
  SaliencyScores extractor_scores(const std::vector<int>& ids) const;

  // Training-time input construction. Examples must be vocabulary-encoded;
  // labels/oracle fields must be present where the strategy needs them.
  PreparedExample prepare_train_example(const Example& ex) const;

  // Inference-time input construction (SEG scores sentences with the
  // extractor; CIT extracts C and prepends it).
  TokenSeq prepare_input(const TokenSeq& src) const;

  LossGraph<Real> forward_loss(const std::vector<const PreparedExample*>& batch,
                               const FwdCtx& ctx = {}) const;

  // Forward, NaN check, backward, optimizer step.
  LossReport train_step(const std::vector<const PreparedExample*>& batch,
                        AdamOptimizer<Real>& opt, const FwdCtx& ctx = {});

  GenerationResult generate(const TokenSeq& src) const;

  // Name-prefixed views over all parameters (checkpointing, audits).
  std::vector<NamedParam<Real>> named_params() const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  TransformerModel<Real> seq2seq_;
  std::unique_ptr<ExtractorModel<Real>> extractor_;
  int64_t cit_k_ = 0;
  int64_t seg_p_ = 1;
  ExtractFilter filter_;
};

// Derived default for CIT's K when no override is given: 30% of the mean
// reference length, at least 1.
int64_t default_cit_k(const std::vector<Example>& train);

// One supervised extractor step over (source ids, labels) pairs.
template <class Real>
double extractor_train_step(
    ExtractorModel<Real>& extractor,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>& batch,
    AdamOptimizer<Real>& opt);

// Token-level F1 of thresholded scores (>= 0.5) against labels.
template <class Real>
double extractor_token_f1(
    const ExtractorModel<Real>& extractor,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>& eval_set);

// Deterministic with-replacement batch sampling: step index and seed fully
// determine the batch, so interrupted runs resume on the same data order.
std::vector<int64_t> batch_indices(uint64_t seed, int64_t step,
                                   int64_t batch_size, int64_t n);

}  // namespace salsum
