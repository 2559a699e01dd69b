#include "salsum/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace salsum {

namespace {

constexpr StrategyTraits kTraits[] = {
    // name        shared  extr   se     sa     abs+sal  head supervised
    {"finetune",   false,  false, false, false, false,   false},
    {"mt",         true,   false, false, false, true,    true},
    {"se",         true,   false, true,  false, false,   false},
    {"se-mt",      true,   false, true,  false, true,    true},
    {"sa",         true,   false, false, true,  false,   false},
    {"sa-mt",      true,   false, false, true,  true,    true},
    {"seg",        false,  true,  false, false, false,   false},
    {"cit",        false,  true,  false, false, false,   false},
    {"cit-se",     true,   true,  true,  false, false,   false},
    {"cit-sa",     true,   true,  false, true,  false,   false},
};

}  // namespace

const StrategyTraits& strategy_traits(Strategy s) {
  return kTraits[static_cast<int>(s)];
}

const char* strategy_name(Strategy s) { return strategy_traits(s).name; }

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : kAllStrategies)
    if (name == strategy_traits(s).name) return s;
  throw std::invalid_argument("unknown strategy '" + name +
                              "' (expected one of finetune, mt, se, se-mt, "
                              "sa, sa-mt, seg, cit, cit-se, cit-sa)");
}

std::vector<std::string> abs_loss_terms(Strategy s) {
  if (strategy_traits(s).abs_includes_sal) return {"L_sum", "L_sal"};
  return {"L_sum"};
}

std::vector<std::string> ext_loss_terms(Strategy s) {
  if (strategy_traits(s).uses_extractor) return {"L_sal"};
  return {};
}

uint64_t derive_seed(uint64_t master, const std::string& tag) {
  // FNV-1a over the tag folded into the master seed; stable across builds.
  uint64_t h = 1469598103934665603ull ^ master;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<int64_t> batch_indices(uint64_t seed, int64_t step,
                                   int64_t batch_size, int64_t n) {
  if (n <= 0) throw std::invalid_argument("batch_indices: empty dataset");
  std::mt19937_64 rng(derive_seed(seed, "batch/" + std::to_string(step)));
  std::uniform_int_distribution<int64_t> pick(0, n - 1);
  std::vector<int64_t> out(batch_size);
  for (auto& i : out) i = pick(rng);
  return out;
}

int64_t default_cit_k(const std::vector<Example>& train) {
  if (train.empty()) return 1;
  double total = 0;
  for (const auto& ex : train) total += double(ex.summary.size());
  const double avg = total / double(train.size());
  return std::max<int64_t>(1, std::llround(0.3 * avg));
}

// ---------------------------------------------------------------------------
// SummarizationSystem
// ---------------------------------------------------------------------------

template <class Real>
SummarizationSystem<Real>::SummarizationSystem(const ModelConfig& cfg,
                                               Vocabulary vocab, uint64_t seed)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      seq2seq_(cfg, derive_seed(seed, "seq2seq"),
               strategy_traits(cfg.strategy).shared_head) {
  if (cfg_.vocab_size != vocab_.size())
    throw std::invalid_argument(
        "system: config vocab_size " + std::to_string(cfg_.vocab_size) +
        " does not match vocabulary size " + std::to_string(vocab_.size()));
  if (traits().uses_extractor)
    extractor_ = std::make_unique<ExtractorModel<Real>>(
        cfg_, derive_seed(seed, "extractor"));
}

template <class Real>
ExtractorModel<Real>& SummarizationSystem<Real>::extractor() {
  if (!extractor_)
    throw std::runtime_error(std::string("strategy ") + traits().name +
                             " has no extractor");
  return *extractor_;
}

template <class Real>
const ExtractorModel<Real>& SummarizationSystem<Real>::extractor() const {
  if (!extractor_)
    throw std::runtime_error(std::string("strategy ") + traits().name +
                             " has no extractor");
  return *extractor_;
}

template <class Real>
EncoderState<Real> SummarizationSystem<Real>::se_weight(
    const EncoderState<Real>& enc, const TensorT<Real>& scores) {
  if (scores.numel() != enc.length())
    throw std::invalid_argument(
        "se_weight: " + std::to_string(scores.numel()) + " scores for " +
        std::to_string(enc.length()) + " encoder states");
  return {mul_rowwise(enc.hidden, scores)};
}

template <class Real>
TensorT<Real> SummarizationSystem<Real>::sa_weight(
    const TensorT<Real>& attn_rows, const TensorT<Real>& scores) {
  if (attn_rows.rank() != 2 || scores.numel() != attn_rows.dim(1))
    throw std::invalid_argument(
        "sa_weight: " + std::to_string(scores.numel()) + " scores for " +
        shape_str(attn_rows.shape()) + " attention rows");
  return rows_renormalize(mul_colwise(attn_rows, scores));
}

template <class Real>
SaliencyScores SummarizationSystem<Real>::extractor_scores(
    const std::vector<int>& ids) const {
  // Frozen use: detach parameters by scoring through a no-grad copy is not
  // needed; the scores tensor simply never joins a loss graph.
  return materialize_scores(extractor().score(ids),
                            SaliencyScores::Source::Extractor);
}

template <class Real>
PreparedExample SummarizationSystem<Real>::prepare_train_example(
    const Example& ex) const {
  if (ex.source.ids.empty() || ex.summary.ids.empty())
    throw std::invalid_argument("prepare: example not vocabulary-encoded");
  PreparedExample out;
  const TokenSeq x = truncate(ex.source, cfg_.max_src_len);
  TokenSeq summary = truncate(ex.summary, cfg_.max_tgt_len);
  out.target_ids = summary.ids;
  out.src_ids = x.ids;

  const auto& tr = traits();
  const bool needs_labels = tr.abs_includes_sal || tr.uses_extractor;
  if (needs_labels) {
    if (!ex.labels)
      throw std::runtime_error(
          std::string("strategy ") + tr.name +
          " needs pseudo labels; generate them with make-labels first");
    out.src_labels.assign(ex.labels->begin(),
                          ex.labels->begin() +
                              std::min<int64_t>(x.size(), ex.labels->size()));
    out.src_labels.resize(x.size(), 0);
  }

  switch (cfg_.strategy) {
    case Strategy::SEG: {
      if (!ex.oracle_sentences)
        throw std::runtime_error(
            "strategy seg needs oracle sentences; generate them with "
            "make-labels first");
      TokenSeq xs;
      for (int64_t j : *ex.oracle_sentences) {
        if (j < 0 || j >= static_cast<int64_t>(ex.source.sentences.size()))
          throw std::runtime_error("prepare: oracle sentence index " +
                                   std::to_string(j) + " out of range");
        auto [s, e] = ex.source.sentences[j];
        const int64_t start = xs.size();
        for (int64_t i = s; i < e; ++i) {
          xs.surfaces.push_back(ex.source.surfaces[i]);
          xs.ids.push_back(ex.source.ids[i]);
        }
        xs.sentences.emplace_back(start, xs.size());
      }
      if (xs.empty()) xs = x;  // oracle found nothing; fall back to X
      out.input_tokens = truncate(xs, cfg_.max_src_len);
      out.input_ids = out.input_tokens.ids;
      break;
    }
    case Strategy::CIT:
    case Strategy::CIT_SE:
    case Strategy::CIT_SA: {
      auto scores = extractor_scores(x.ids);
      TokenSeq c = extract_top_k_tokens(x, scores, cit_k_, filter_);
      out.cit_prefix_len = c.size();
      TokenSeq combined = c;
      combined.surfaces.push_back("<sep>");
      combined.ids.push_back(Vocabulary::kSep);
      combined.surfaces.insert(combined.surfaces.end(), x.surfaces.begin(),
                               x.surfaces.end());
      combined.ids.insert(combined.ids.end(), x.ids.begin(), x.ids.end());
      combined.sentences.clear();
      combined.sentences.emplace_back(0, combined.size());
      out.input_tokens = truncate(combined, cfg_.max_src_len);
      out.input_ids = out.input_tokens.ids;
      break;
    }
    default: {
      out.input_tokens = x;
      out.input_ids = x.ids;
      break;
    }
  }

  if (tr.abs_includes_sal) {
    // MT-family inputs are X itself, so the labels align one to one.
    out.labels = out.src_labels;
    out.labels.resize(out.input_ids.size(), 0);
  }
  return out;
}

template <class Real>
TokenSeq SummarizationSystem<Real>::prepare_input(const TokenSeq& src) const {
  const TokenSeq x = truncate(src, cfg_.max_src_len);
  switch (cfg_.strategy) {
    case Strategy::SEG: {
      auto scores = extractor_scores(x.ids);
      auto per_sentence = sentence_scores(scores, x.sentences);
      return extract_top_p_sentences(x, per_sentence, seg_p_);
    }
    case Strategy::CIT:
    case Strategy::CIT_SE:
    case Strategy::CIT_SA: {
      auto scores = extractor_scores(x.ids);
      TokenSeq c = extract_top_k_tokens(x, scores, cit_k_, filter_);
      TokenSeq combined = c;
      combined.surfaces.push_back("<sep>");
      combined.ids.push_back(Vocabulary::kSep);
      combined.surfaces.insert(combined.surfaces.end(), x.surfaces.begin(),
                               x.surfaces.end());
      combined.ids.insert(combined.ids.end(), x.ids.begin(), x.ids.end());
      combined.sentences.clear();
      combined.sentences.emplace_back(0, combined.size());
      return truncate(combined, cfg_.max_src_len);
    }
    default:
      return x;
  }
}

template <class Real>
LossGraph<Real> SummarizationSystem<Real>::forward_loss(
    const std::vector<const PreparedExample*>& batch, const FwdCtx& ctx) const {
  if (batch.empty()) throw std::invalid_argument("forward_loss: empty batch");
  const auto& tr = traits();
  LossGraph<Real> graph;
  std::vector<TensorT<Real>> sum_losses, sal_losses;
  for (const PreparedExample* ex : batch) {
    if (ex->target_ids.empty())
      throw std::invalid_argument("forward_loss: empty reference summary");
    auto enc = seq2seq_.encode(ex->input_ids, ctx);
    ExampleTrace<Real> trace;
    trace.enc_hidden = enc.hidden;

    std::optional<TensorT<Real>> scores;
    if (tr.shared_head) {
      scores = seq2seq_.saliency_scores(enc);
      trace.scores = scores;
    }
    EncoderState<Real> used = enc;
    if (tr.se_weighting) used = se_weight(enc, *scores);
    std::optional<TensorT<Real>> attn_scores;
    if (tr.sa_weighting) attn_scores = scores;

    std::vector<int> tgt_in = {Vocabulary::kBos};
    tgt_in.insert(tgt_in.end(), ex->target_ids.begin(), ex->target_ids.end());
    std::vector<int> tgt_out = ex->target_ids;
    tgt_out.push_back(Vocabulary::kEos);

    auto [logits, dec_trace] =
        seq2seq_.decode_logits(used, tgt_in, attn_scores, ctx);
    trace.context_attn = std::move(dec_trace.context_attn);
    sum_losses.push_back(cross_entropy(logits, tgt_out));

    if (tr.abs_includes_sal) {
      if (ex->labels.size() != static_cast<size_t>(scores->numel()))
        throw std::invalid_argument("forward_loss: labels misaligned");
      sal_losses.push_back(saliency_loss(*scores, ex->labels));
    }
    graph.traces.push_back(std::move(trace));
  }
  graph.l_sum = average(sum_losses);
  if (!sal_losses.empty()) {
    graph.l_sal = average(sal_losses);
    graph.l_abs = add(graph.l_sum, *graph.l_sal);
  } else {
    graph.l_abs = graph.l_sum;
  }
  return graph;
}

template <class Real>
LossReport SummarizationSystem<Real>::train_step(
    const std::vector<const PreparedExample*>& batch, AdamOptimizer<Real>& opt,
    const FwdCtx& ctx) {
  auto graph = forward_loss(batch, ctx);
  LossReport report;
  report.l_sum = graph.l_sum.item();
  if (graph.l_sal) report.l_sal = graph.l_sal->item();
  report.l_abs = graph.l_abs.item();
  if (!std::isfinite(report.l_abs)) {
    std::ostringstream os;
    os << "train_step: non-finite loss after " << opt.steps_taken()
       << " optimizer steps (L_sum=" << report.l_sum;
    if (report.l_sal) os << ", L_sal=" << *report.l_sal;
    os << "); aborting";
    throw std::runtime_error(os.str());
  }
  backward(graph.l_abs);
  opt.step();
  return report;
}

template <class Real>
GenerationResult SummarizationSystem<Real>::generate(
    const TokenSeq& src) const {
  const auto& tr = traits();
  GenerationResult result;
  TokenSeq input = prepare_input(src);
  if (tr.uses_extractor &&
      (cfg_.strategy == Strategy::CIT || cfg_.strategy == Strategy::CIT_SE ||
       cfg_.strategy == Strategy::CIT_SA)) {
    // Recover C from the combined input (everything before the separator).
    TokenSeq c;
    for (int64_t i = 0; i < input.size() && input.ids[i] != Vocabulary::kSep;
         ++i) {
      c.surfaces.push_back(input.surfaces[i]);
      c.ids.push_back(input.ids[i]);
    }
    if (!c.empty()) c.sentences.emplace_back(0, c.size());
    result.selected_tokens = std::move(c);
  }

  auto enc = seq2seq_.encode(input.ids);
  std::optional<TensorT<Real>> scores;
  if (tr.shared_head) scores = seq2seq_.saliency_scores(enc);
  EncoderState<Real> used = enc;
  if (tr.se_weighting) used = se_weight(enc, *scores);
  std::optional<TensorT<Real>> attn_scores;
  if (tr.sa_weighting) attn_scores = scores;

  auto ids = seq2seq_.greedy_decode(used, attn_scores);
  TokenSeq summary;
  for (int id : ids) {
    summary.ids.push_back(id);
    summary.surfaces.push_back(vocab_.decode(id));
  }
  if (!summary.empty()) summary.sentences.emplace_back(0, summary.size());
  result.summary = std::move(summary);
  return result;
}

template <class Real>
std::vector<NamedParam<Real>> SummarizationSystem<Real>::named_params() const {
  std::vector<NamedParam<Real>> out;
  for (const auto& p : seq2seq_.params().params())
    out.push_back({"seq2seq." + p.name, p.tensor});
  if (extractor_)
    for (const auto& p : extractor_->params().params())
      out.push_back({"extractor." + p.name, p.tensor});
  return out;
}

// ---------------------------------------------------------------------------
// Extractor training helpers
// ---------------------------------------------------------------------------

template <class Real>
double extractor_train_step(
    ExtractorModel<Real>& extractor,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>& batch,
    AdamOptimizer<Real>& opt) {
  if (batch.empty())
    throw std::invalid_argument("extractor_train_step: empty batch");
  std::vector<TensorT<Real>> losses;
  for (const auto& [ids, labels] : batch)
    losses.push_back(saliency_loss(extractor.score(*ids), *labels));
  auto l_ext = average(losses);
  const double value = l_ext.item();
  if (!std::isfinite(value))
    throw std::runtime_error("extractor_train_step: non-finite loss");
  backward(l_ext);
  opt.step();
  return value;
}

template <class Real>
double extractor_token_f1(
    const ExtractorModel<Real>& extractor,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>& eval_set) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [ids, labels] : eval_set) {
    auto scores = extractor.score(*ids);
    for (int64_t i = 0; i < scores.numel(); ++i) {
      const bool pred = scores.value()[i] >= Real(0.5);
      const bool truth = (*labels)[i] != 0;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom > 0 ? 2.0 * tp / denom : 0.0;
}

template class SummarizationSystem<float>;
template class SummarizationSystem<double>;
template double extractor_train_step(
    ExtractorModel<float>&,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>&,
    AdamOptimizer<float>&);
template double extractor_train_step(
    ExtractorModel<double>&,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>&,
    AdamOptimizer<double>&);
template double extractor_token_f1(
    const ExtractorModel<float>&,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>&);
template double extractor_token_f1(
    const ExtractorModel<double>&,
    const std::vector<std::pair<const std::vector<int>*,
                                const std::vector<int>*>>&);

}  // namespace salsum
