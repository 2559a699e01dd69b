#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salsum/strategy.hpp"
#include "salsum/tensor.hpp"

namespace salsum {

struct ModelConfig {
  int64_t layers = 2;       // encoder and decoder block count
  int64_t d_model = 64;
  int64_t heads = 4;
  int64_t ffn_width = 0;    // 0 -> 4 * d_model
  int64_t vocab_size = 0;   // set once the vocabulary exists
  int64_t max_src_len = 64;
  int64_t max_tgt_len = 16;  // generated tokens; decoder input fits one more
  double dropout = 0.0;
  double init_std = 0.08;  // weight init scale; from-scratch desk-scale
                           // models stall on attention learning below ~0.05
  Strategy strategy = Strategy::FineTune;

  int64_t head_dim() const { return d_model / heads; }
  int64_t ffn() const { return ffn_width > 0 ? ffn_width : 4 * d_model; }
  void validate() const;
};

// Per-forward-pass context. Dropout draws from rng in train mode only.
struct FwdCtx {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

template <class Real>
struct NamedParam {
  std::string name;
  TensorT<Real> tensor;
};

// Creation-ordered registry of trainable leaves; the seed fixes every init.
template <class Real>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : rng_(seed) {}

  TensorT<Real> randn(const std::string& name, Shape shape,
                      Real stddev = Real(0.02));
  TensorT<Real> constant(const std::string& name, Shape shape, Real v);

  const std::vector<NamedParam<Real>>& params() const { return params_; }
  TensorT<Real> find(const std::string& name) const;

 private:
  TensorT<Real> track(const std::string& name, TensorT<Real> t);
  std::mt19937_64 rng_;
  std::vector<NamedParam<Real>> params_;
};

enum class AttnMask { None, Causal };

template <class Real>
struct AttentionResult {
  TensorT<Real> output;                  // I x d
  std::vector<TensorT<Real>> head_attn;  // per head I x J, post-reweighting
};

// Multi-head scaled dot-product attention. When saliency is present each
// row of every head's weight matrix is multiplied elementwise by the scores
// and renormalized before mixing the values.
template <class Real>
class MultiHeadAttention {
 public:
  MultiHeadAttention(ParamStore<Real>& store, const std::string& prefix,
                     const ModelConfig& cfg);
  AttentionResult<Real> forward(
      const TensorT<Real>& q_in, const TensorT<Real>& kv_in, AttnMask mask,
      const std::optional<TensorT<Real>>& saliency = std::nullopt) const;

 private:
  int64_t heads_;
  int64_t head_dim_;
  TensorT<Real> wq_, wk_, wv_, wo_;
};

template <class Real>
struct LayerNormParams {
  TensorT<Real> gain, bias;
  LayerNormParams(ParamStore<Real>& store, const std::string& prefix,
                  int64_t d);
  TensorT<Real> operator()(const TensorT<Real>& x) const {
    return layer_norm(x, gain, bias);
  }
};

template <class Real>
class FeedForward {
 public:
  FeedForward(ParamStore<Real>& store, const std::string& prefix,
              const ModelConfig& cfg);
  TensorT<Real> forward(const TensorT<Real>& x) const;

 private:
  TensorT<Real> w1_, b1_, w2_, b2_;
};

// Pre-norm residual block: x + Attn(LN(x)), then x + FF(LN(x)).
template <class Real>
class EncoderBlock {
 public:
  EncoderBlock(ParamStore<Real>& store, const std::string& prefix,
               const ModelConfig& cfg);
  TensorT<Real> forward(const TensorT<Real>& x, const ModelConfig& cfg,
                        const FwdCtx& ctx) const;

 private:
  LayerNormParams<Real> ln1_, ln2_;
  MultiHeadAttention<Real> attn_;
  FeedForward<Real> ff_;
};

template <class Real>
class DecoderBlock {
 public:
  DecoderBlock(ParamStore<Real>& store, const std::string& prefix,
               const ModelConfig& cfg);
  // Returns the block output and the context-attention head matrices.
  std::pair<TensorT<Real>, std::vector<TensorT<Real>>> forward(
      const TensorT<Real>& x, const TensorT<Real>& enc_hidden,
      const std::optional<TensorT<Real>>& saliency, const ModelConfig& cfg,
      const FwdCtx& ctx) const;

 private:
  LayerNormParams<Real> ln1_, ln2_, ln3_;
  MultiHeadAttention<Real> self_attn_, context_attn_;
  FeedForward<Real> ff_;
};

// Embeddings plus a stack of encoder blocks; shared by the seq-to-seq
// encoder and the standalone extractor.
template <class Real>
class TransformerEncoderCore {
 public:
  TransformerEncoderCore(ParamStore<Real>& store, const std::string& prefix,
                         const ModelConfig& cfg, TensorT<Real> token_table);
  TensorT<Real> forward(const std::vector<int>& ids, const ModelConfig& cfg,
                        const FwdCtx& ctx) const;

 private:
  TensorT<Real> token_table_;
  TensorT<Real> pos_table_;
  std::vector<EncoderBlock<Real>> blocks_;
};

template <class Real>
struct EncoderState {
  TensorT<Real> hidden;  // L x d
  int64_t length() const { return hidden.dim(0); }
};

template <class Real>
struct DecodeTrace {
  TensorT<Real> hidden;                                  // t x d
  std::vector<std::vector<TensorT<Real>>> context_attn;  // [layer][head]
};

template <class Real>
class TransformerModel {
 public:
  TransformerModel(const ModelConfig& cfg, uint64_t seed,
                   bool with_saliency_head);

  const ModelConfig& config() const { return cfg_; }
  bool has_saliency_head() const { return sal_w1_.defined(); }

  EncoderState<Real> encode(const std::vector<int>& src_ids,
                            const FwdCtx& ctx = {}) const;

  // Scores in (0,1), one per encoder position (shared-head strategies).
  TensorT<Real> saliency_scores(const EncoderState<Real>& enc) const;

  // Teacher-forced logits for every prefix position. tgt_in starts at BOS.
  std::pair<TensorT<Real>, DecodeTrace<Real>> decode_logits(
      const EncoderState<Real>& enc, const std::vector<int>& tgt_in,
      const std::optional<TensorT<Real>>& saliency = std::nullopt,
      const FwdCtx& ctx = {}) const;

  // Logits of the next token after the given prefix.
  TensorT<Real> decode_step(
      const EncoderState<Real>& enc, const std::vector<int>& prefix,
      const std::optional<TensorT<Real>>& saliency = std::nullopt) const;

  // Argmax decoding, ties to the lowest token id, until EOS or the length
  // cap. Returns generated ids without BOS/EOS.
  std::vector<int> greedy_decode(
      const EncoderState<Real>& enc,
      const std::optional<TensorT<Real>>& saliency = std::nullopt) const;

  // Teacher-forced cross entropy, averaged per token within each sample
  // and then across samples.
  TensorT<Real> summary_loss(
      const std::vector<std::pair<std::vector<int>, std::vector<int>>>& batch,
      const FwdCtx& ctx = {}) const;

  ParamStore<Real>& params() { return store_; }
  const ParamStore<Real>& params() const { return store_; }

 private:
  ModelConfig cfg_;
  ParamStore<Real> store_;
  TensorT<Real> token_table_;
  TransformerEncoderCore<Real> encoder_;
  TensorT<Real> dec_pos_table_;
  std::vector<DecoderBlock<Real>> dec_blocks_;
  TensorT<Real> w_out_, b_out_;
  TensorT<Real> sal_w1_, sal_b1_;  // undefined without a saliency head
};

}  // namespace salsum
