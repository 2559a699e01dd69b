#include "salsum/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "salsum/corpus.hpp"

namespace salsum {

void ModelConfig::validate() const {
  if (layers < 0) throw std::invalid_argument("config: layers must be >= 0");
  if (d_model < 1 || heads < 1)
    throw std::invalid_argument("config: d_model and heads must be positive");
  if (d_model % heads != 0)
    throw std::invalid_argument("config: d_model " + std::to_string(d_model) +
                                " not divisible by heads " +
                                std::to_string(heads));
  if (max_src_len < 1 || max_tgt_len < 1)
    throw std::invalid_argument("config: max lengths must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("config: dropout must be in [0, 1)");
  if (init_std <= 0.0)
    throw std::invalid_argument("config: init_std must be positive");
  if (vocab_size < Vocabulary::kReserved)
    throw std::invalid_argument("config: vocab_size below reserved range");
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

template <class Real>
TensorT<Real> ParamStore<Real>::track(const std::string& name,
                                      TensorT<Real> t) {
  for (const auto& p : params_)
    if (p.name == name)
      throw std::invalid_argument("params: duplicate name " + name);
  params_.push_back({name, t});
  return t;
}

template <class Real>
TensorT<Real> ParamStore<Real>::randn(const std::string& name, Shape shape,
                                      Real stddev) {
  return track(name, TensorT<Real>::randn(std::move(shape), rng_, stddev,
                                          /*requires_grad=*/true));
}

template <class Real>
TensorT<Real> ParamStore<Real>::constant(const std::string& name, Shape shape,
                                         Real v) {
  return track(name, TensorT<Real>::full(std::move(shape), v,
                                         /*requires_grad=*/true));
}

template <class Real>
TensorT<Real> ParamStore<Real>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::invalid_argument("params: no parameter named " + name);
}

// ---------------------------------------------------------------------------
// MultiHeadAttention
// ---------------------------------------------------------------------------

namespace {

std::vector<uint8_t> causal_mask(int64_t rows) {
  std::vector<uint8_t> mask(rows * rows, 0);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j <= i; ++j) mask[i * rows + j] = 1;
  return mask;
}

template <class Real>
TensorT<Real> maybe_dropout(const TensorT<Real>& x, const ModelConfig& cfg,
                            const FwdCtx& ctx) {
  if (!ctx.train || cfg.dropout <= 0.0) return x;
  if (!ctx.rng)
    throw std::invalid_argument("forward: dropout requires an rng in train mode");
  return dropout(x, cfg.dropout, *ctx.rng);
}

}  // namespace

template <class Real>
MultiHeadAttention<Real>::MultiHeadAttention(ParamStore<Real>& store,
                                             const std::string& prefix,
                                             const ModelConfig& cfg)
    : heads_(cfg.heads),
      head_dim_(cfg.head_dim()),
      wq_(store.randn(prefix + ".wq", {cfg.d_model, cfg.d_model},
                      Real(cfg.init_std))),
      wk_(store.randn(prefix + ".wk", {cfg.d_model, cfg.d_model},
                      Real(cfg.init_std))),
      wv_(store.randn(prefix + ".wv", {cfg.d_model, cfg.d_model},
                      Real(cfg.init_std))),
      wo_(store.randn(prefix + ".wo", {cfg.d_model, cfg.d_model},
                      Real(cfg.init_std))) {}

template <class Real>
AttentionResult<Real> MultiHeadAttention<Real>::forward(
    const TensorT<Real>& q_in, const TensorT<Real>& kv_in, AttnMask mask,
    const std::optional<TensorT<Real>>& saliency) const {
  const int64_t rows = q_in.dim(0);
  const int64_t keys = kv_in.dim(0);
  if (mask == AttnMask::Causal && rows != keys)
    throw std::invalid_argument("attention: causal mask needs square shape");
  if (saliency && saliency->numel() != keys)
    throw std::invalid_argument(
        "attention: saliency override length " +
        std::to_string(saliency->numel()) + " does not match key count " +
        std::to_string(keys));

  const auto q = matmul(q_in, wq_);
  const auto k = matmul(kv_in, wk_);
  const auto v = matmul(kv_in, wv_);
  const Real inv_sqrt_dk = Real(1) / std::sqrt(Real(head_dim_));

  AttentionResult<Real> result;
  std::vector<TensorT<Real>> head_outputs;
  for (int64_t h = 0; h < heads_; ++h) {
    const int64_t c0 = h * head_dim_, c1 = c0 + head_dim_;
    auto qh = slice_cols(q, c0, c1);
    auto kh = slice_cols(k, c0, c1);
    auto vh = slice_cols(v, c0, c1);
    auto scores = scale(matmul_nt(qh, kh), inv_sqrt_dk);
    // The override evaluates the renormalized score-weighted rows in one
    // fused pass, so a weight vector of exactly 1s reproduces the plain
    // path bit for bit.
    TensorT<Real> attn;
    if (saliency) {
      attn = mask == AttnMask::Causal
                 ? weighted_softmax_rows(scores, *saliency,
                                         causal_mask(rows))
                 : weighted_softmax_rows(scores, *saliency);
    } else {
      attn = mask == AttnMask::Causal
                 ? masked_softmax_rows(scores, causal_mask(rows))
                 : softmax_rows(scores);
    }
    result.head_attn.push_back(attn);
    head_outputs.push_back(matmul(attn, vh));
  }
  result.output = matmul(concat_cols(head_outputs), wo_);
  return result;
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

template <class Real>
LayerNormParams<Real>::LayerNormParams(ParamStore<Real>& store,
                                       const std::string& prefix, int64_t d)
    : gain(store.constant(prefix + ".gain", {d}, Real(1))),
      bias(store.constant(prefix + ".bias", {d}, Real(0))) {}

template <class Real>
FeedForward<Real>::FeedForward(ParamStore<Real>& store,
                               const std::string& prefix,
                               const ModelConfig& cfg)
    : w1_(store.randn(prefix + ".w1", {cfg.d_model, cfg.ffn()},
                      Real(cfg.init_std))),
      b1_(store.constant(prefix + ".b1", {cfg.ffn()}, Real(0))),
      w2_(store.randn(prefix + ".w2", {cfg.ffn(), cfg.d_model},
                      Real(cfg.init_std))),
      b2_(store.constant(prefix + ".b2", {cfg.d_model}, Real(0))) {}

template <class Real>
TensorT<Real> FeedForward<Real>::forward(const TensorT<Real>& x) const {
  return add_rowvec(matmul(gelu(add_rowvec(matmul(x, w1_), b1_)), w2_), b2_);
}

template <class Real>
EncoderBlock<Real>::EncoderBlock(ParamStore<Real>& store,
                                 const std::string& prefix,
                                 const ModelConfig& cfg)
    : ln1_(store, prefix + ".ln1", cfg.d_model),
      ln2_(store, prefix + ".ln2", cfg.d_model),
      attn_(store, prefix + ".self", cfg),
      ff_(store, prefix + ".ff", cfg) {}

template <class Real>
TensorT<Real> EncoderBlock<Real>::forward(const TensorT<Real>& x,
                                          const ModelConfig& cfg,
                                          const FwdCtx& ctx) const {
  auto attn_out = attn_.forward(ln1_(x), ln1_(x), AttnMask::None).output;
  auto x1 = add(x, maybe_dropout(attn_out, cfg, ctx));
  auto ff_out = ff_.forward(ln2_(x1));
  return add(x1, maybe_dropout(ff_out, cfg, ctx));
}

template <class Real>
DecoderBlock<Real>::DecoderBlock(ParamStore<Real>& store,
                                 const std::string& prefix,
                                 const ModelConfig& cfg)
    : ln1_(store, prefix + ".ln1", cfg.d_model),
      ln2_(store, prefix + ".ln2", cfg.d_model),
      ln3_(store, prefix + ".ln3", cfg.d_model),
      self_attn_(store, prefix + ".self", cfg),
      context_attn_(store, prefix + ".context", cfg),
      ff_(store, prefix + ".ff", cfg) {}

template <class Real>
std::pair<TensorT<Real>, std::vector<TensorT<Real>>> DecoderBlock<Real>::forward(
    const TensorT<Real>& x, const TensorT<Real>& enc_hidden,
    const std::optional<TensorT<Real>>& saliency, const ModelConfig& cfg,
    const FwdCtx& ctx) const {
  auto self_out =
      self_attn_.forward(ln1_(x), ln1_(x), AttnMask::Causal).output;
  auto x1 = add(x, maybe_dropout(self_out, cfg, ctx));
  auto ctx_result =
      context_attn_.forward(ln2_(x1), enc_hidden, AttnMask::None, saliency);
  auto x2 = add(x1, maybe_dropout(ctx_result.output, cfg, ctx));
  auto ff_out = ff_.forward(ln3_(x2));
  return {add(x2, maybe_dropout(ff_out, cfg, ctx)),
          std::move(ctx_result.head_attn)};
}

// ---------------------------------------------------------------------------
// Encoder core
// ---------------------------------------------------------------------------

template <class Real>
TransformerEncoderCore<Real>::TransformerEncoderCore(ParamStore<Real>& store,
                                                     const std::string& prefix,
                                                     const ModelConfig& cfg,
                                                     TensorT<Real> token_table)
    : token_table_(std::move(token_table)),
      pos_table_(store.randn(prefix + ".pos_emb",
                             {cfg.max_src_len, cfg.d_model},
                             Real(cfg.init_std))) {
  for (int64_t m = 0; m < cfg.layers; ++m)
    blocks_.emplace_back(store, prefix + ".layer" + std::to_string(m), cfg);
}

template <class Real>
TensorT<Real> TransformerEncoderCore<Real>::forward(
    const std::vector<int>& ids, const ModelConfig& cfg,
    const FwdCtx& ctx) const {
  if (ids.empty()) throw std::invalid_argument("encode: empty input");
  if (static_cast<int64_t>(ids.size()) > cfg.max_src_len)
    throw std::invalid_argument(
        "encode: input length " + std::to_string(ids.size()) +
        " exceeds max source length " + std::to_string(cfg.max_src_len));
  std::vector<int> positions(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
  auto x = add(embed(ids, token_table_), embed(positions, pos_table_));
  x = maybe_dropout(x, cfg, ctx);
  for (const auto& block : blocks_) x = block.forward(x, cfg, ctx);
  return x;
}

// ---------------------------------------------------------------------------
// TransformerModel
// ---------------------------------------------------------------------------

template <class Real>
TransformerModel<Real>::TransformerModel(const ModelConfig& cfg, uint64_t seed,
                                         bool with_saliency_head)
    : cfg_([&] {
        cfg.validate();
        return cfg;
      }()),
      store_(seed),
      token_table_(store_.randn("tok_emb", {cfg.vocab_size, cfg.d_model},
                                Real(cfg.init_std))),
      encoder_(store_, "enc", cfg, token_table_),
      dec_pos_table_(store_.randn("dec.pos_emb",
                                  {cfg.max_tgt_len + 1, cfg.d_model},
                                  Real(cfg.init_std))),
      w_out_(store_.randn("out.w", {cfg.d_model, cfg.vocab_size},
                          Real(cfg.init_std))),
      b_out_(store_.constant("out.b", {cfg.vocab_size}, Real(0))) {
  for (int64_t m = 0; m < cfg.layers; ++m)
    dec_blocks_.emplace_back(store_, "dec.layer" + std::to_string(m), cfg);
  if (with_saliency_head) {
    sal_w1_ = store_.randn("sal.w1", {cfg.d_model, 1}, Real(cfg.init_std));
    sal_b1_ = store_.constant("sal.b1", {1}, Real(0));
  }
}

template <class Real>
EncoderState<Real> TransformerModel<Real>::encode(
    const std::vector<int>& src_ids, const FwdCtx& ctx) const {
  return {encoder_.forward(src_ids, cfg_, ctx)};
}

template <class Real>
TensorT<Real> TransformerModel<Real>::saliency_scores(
    const EncoderState<Real>& enc) const {
  if (!has_saliency_head())
    throw std::runtime_error("model: no saliency head under this strategy");
  auto raw = add_scalar(matmul(enc.hidden, sal_w1_), sal_b1_);
  return reshape(sigmoid(raw), {enc.length()});
}

template <class Real>
std::pair<TensorT<Real>, DecodeTrace<Real>> TransformerModel<Real>::decode_logits(
    const EncoderState<Real>& enc, const std::vector<int>& tgt_in,
    const std::optional<TensorT<Real>>& saliency, const FwdCtx& ctx) const {
  if (tgt_in.empty())
    throw std::invalid_argument("decode: prefix must start with BOS");
  if (static_cast<int64_t>(tgt_in.size()) > cfg_.max_tgt_len + 1)
    throw std::invalid_argument(
        "decode: prefix length " + std::to_string(tgt_in.size()) +
        " exceeds max target length " + std::to_string(cfg_.max_tgt_len));
  std::vector<int> positions(tgt_in.size());
  for (size_t i = 0; i < tgt_in.size(); ++i)
    positions[i] = static_cast<int>(i);
  auto x = add(embed(tgt_in, token_table_), embed(positions, dec_pos_table_));
  x = maybe_dropout(x, cfg_, ctx);
  DecodeTrace<Real> trace;
  for (const auto& block : dec_blocks_) {
    auto [out, attn] = block.forward(x, enc.hidden, saliency, cfg_, ctx);
    x = out;
    trace.context_attn.push_back(std::move(attn));
  }
  trace.hidden = x;
  auto logits = add_rowvec(matmul(x, w_out_), b_out_);
  return {logits, trace};
}

template <class Real>
TensorT<Real> TransformerModel<Real>::decode_step(
    const EncoderState<Real>& enc, const std::vector<int>& prefix,
    const std::optional<TensorT<Real>>& saliency) const {
  auto [logits, trace] = decode_logits(enc, prefix, saliency);
  const int64_t t = logits.dim(0);
  return reshape(slice_rows(logits, t - 1, t), {cfg_.vocab_size});
}

template <class Real>
std::vector<int> TransformerModel<Real>::greedy_decode(
    const EncoderState<Real>& enc,
    const std::optional<TensorT<Real>>& saliency) const {
  std::vector<int> prefix = {Vocabulary::kBos};
  std::vector<int> out;
  while (static_cast<int64_t>(out.size()) < cfg_.max_tgt_len) {
    auto logits = decode_step(enc, prefix, saliency);
    // max_element returns the first maximum: ties go to the lowest id.
    const auto& v = logits.value();
    const int next = static_cast<int>(
        std::max_element(v.begin(), v.end()) - v.begin());
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    prefix.push_back(next);
  }
  return out;
}

template <class Real>
TensorT<Real> TransformerModel<Real>::summary_loss(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& batch,
    const FwdCtx& ctx) const {
  if (batch.empty())
    throw std::invalid_argument("summary_loss: empty batch");
  std::vector<TensorT<Real>> losses;
  for (const auto& [src, ref] : batch) {
    if (ref.empty())
      throw std::invalid_argument("summary_loss: empty reference");
    auto enc = encode(src, ctx);
    std::vector<int> tgt_in = {Vocabulary::kBos};
    tgt_in.insert(tgt_in.end(), ref.begin(), ref.end());
    std::vector<int> tgt_out = ref;
    tgt_out.push_back(Vocabulary::kEos);
    auto [logits, trace] = decode_logits(enc, tgt_in, std::nullopt, ctx);
    losses.push_back(cross_entropy(logits, tgt_out));
  }
  return average(losses);
}

template class ParamStore<float>;
template class ParamStore<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;
template struct LayerNormParams<float>;
template struct LayerNormParams<double>;
template class FeedForward<float>;
template class FeedForward<double>;
template class EncoderBlock<float>;
template class EncoderBlock<double>;
template class DecoderBlock<float>;
template class DecoderBlock<double>;
template class TransformerEncoderCore<float>;
template class TransformerEncoderCore<double>;
template class TransformerModel<float>;
template class TransformerModel<double>;

}  // namespace salsum
