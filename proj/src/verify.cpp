#include "salsum/verify.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "salsum/labeling.hpp"
#include "salsum/metrics.hpp"
#include "salsum/oracles.hpp"
#include "salsum/pipeline.hpp"
#include "salsum/strategies.hpp"

namespace salsum {

namespace {

using T64 = TensorT<double>;

template <class Real>
TensorT<Real> random_leaf(Shape shape, std::mt19937_64& rng, double lo,
                          double hi, bool rg = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return TensorT<Real>::leaf(std::move(shape), std::move(v), rg);
}

struct Suite {
  std::vector<CheckResult> results;

  void record(const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  }

  void bound(const std::string& name, double value, double limit) {
    std::ostringstream os;
    os << value << " (bound " << limit << ")";
    record(name, value < limit, os.str());
  }

  void at_least(const std::string& name, double value, double limit) {
    std::ostringstream os;
    os << value << " (needs >= " << limit << ")";
    record(name, value >= limit, os.str());
  }
};

// --- gradient checks -------------------------------------------------------

void primitives_into(Suite& suite) {
  const double h = 1e-5, limit = 1e-4;
  std::mt19937_64 rng(0xACCE55);

  {
    auto a = random_leaf<double>({3, 4}, rng, -2, 2);
    auto b = random_leaf<double>({4, 2}, rng, -2, 2);
    auto w = random_leaf<double>({3, 2}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(matmul(a, b), w)); };
    suite.bound("grad/matmul", grad_check<double>(f, {a, b}, h), limit);
  }
  {
    auto x = random_leaf<double>({4, 5}, rng, -2, 2);
    auto w = random_leaf<double>({4, 5}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(softmax_rows(x), w)); };
    suite.bound("grad/softmax_rows", grad_check<double>(f, {x}, h), limit);
  }
  {
    auto x = random_leaf<double>({7}, rng, -3, 3);
    auto w = random_leaf<double>({7}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(sigmoid(x), w)); };
    suite.bound("grad/sigmoid", grad_check<double>(f, {x}, h), limit);
  }
  {
    auto x = random_leaf<double>({6}, rng, -3, 3);
    auto w = random_leaf<double>({6}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(gelu(x), w)); };
    suite.bound("grad/gelu", grad_check<double>(f, {x}, h), limit);
  }
  {
    auto x = random_leaf<double>({3, 8}, rng, -2, 2);
    auto g = random_leaf<double>({8}, rng, 0.5, 1.5);
    auto b = random_leaf<double>({8}, rng, -1, 1);
    auto w = random_leaf<double>({3, 8}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(layer_norm(x, g, b), w)); };
    suite.bound("grad/layer_norm", grad_check<double>(f, {x, g, b}, h), limit);
  }
  {
    auto table = random_leaf<double>({5, 3}, rng, -2, 2);
    auto w = random_leaf<double>({4, 3}, rng, -1, 1, false);
    const std::vector<int> ids = {1, 4, 1, 0};
    auto f = [&] { return sum_all(mul(embed(ids, table), w)); };
    suite.bound("grad/embed", grad_check<double>(f, {table}, h), limit);
  }
  {
    auto logits = random_leaf<double>({4, 6}, rng, -2, 2);
    const std::vector<int> targets = {2, 0, 5, 3};
    auto f = [&] { return cross_entropy(logits, targets); };
    suite.bound("grad/cross_entropy", grad_check<double>(f, {logits}, h),
                limit);
  }
  {
    auto z = random_leaf<double>({6}, rng, -2, 2);
    const std::vector<int> labels = {1, 0, 1, 1, 0, 1};
    auto f = [&] { return binary_cross_entropy(sigmoid(z), labels); };
    suite.bound("grad/binary_cross_entropy", grad_check<double>(f, {z}, h),
                limit);
  }
  {
    // the SA reweighting path: elementwise product then renormalization
    auto a = random_leaf<double>({3, 5}, rng, 0.05, 1.0);
    auto s = random_leaf<double>({5}, rng, 0.05, 1.0);
    auto w = random_leaf<double>({3, 5}, rng, -1, 1, false);
    auto f = [&] {
      return sum_all(mul(rows_renormalize(mul_colwise(a, s)), w));
    };
    suite.bound("grad/sa_reweight", grad_check<double>(f, {a, s}, h), limit);
  }
  {
    // the SE weighting path
    auto hdn = random_leaf<double>({4, 3}, rng, -2, 2);
    auto s = random_leaf<double>({4}, rng, 0.1, 0.9);
    auto w = random_leaf<double>({4, 3}, rng, -1, 1, false);
    auto f = [&] { return sum_all(mul(mul_rowwise(hdn, s), w)); };
    suite.bound("grad/se_weight", grad_check<double>(f, {hdn, s}, h), limit);
  }
}

// Tiny corpus in a fixed 11-token vocabulary (5 reserved + 6 surface).
struct TinyData {
  Vocabulary vocab;
  std::vector<Example> examples;

  TinyData() : vocab(Vocabulary::from_tokens({"a", "b", "c", "d", "e", "."})) {
    const char* sources[] = {"a b c . d e .", "e d c . b a ."};
    const char* summaries[] = {"b d", "d a"};
    for (int i = 0; i < 2; ++i) {
      Example ex;
      ex.source = tokenize(sources[i]);
      ex.summary = tokenize(summaries[i]);
      encode_with(vocab, ex.source);
      encode_with(vocab, ex.summary);
      auto pl = pseudo_labels(ex.source, ex.summary);
      ex.labels = pl.labels;
      ex.oracle_sentences = oracle_sentences(ex.source, ex.summary, 2);
      examples.push_back(std::move(ex));
    }
  }

  ModelConfig config(Strategy s) const {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.vocab_size = vocab.size();  // 11
    cfg.max_src_len = 16;
    cfg.max_tgt_len = 8;
    cfg.init_std = 0.4;  // conditioning: finite differences need gradients
                         // well above the 1e-8 relative-error floor
    cfg.strategy = s;
    return cfg;
  }
};

void full_models_into(Suite& suite, int64_t coords_per_param) {
  const double h = 1e-5, limit = 1e-3;
  TinyData tiny;
  for (Strategy s : kAllStrategies) {
    SummarizationSystem<double> system(tiny.config(s), tiny.vocab, 77);
    if (system.has_extractor()) system.set_cit_k(2);
    std::vector<PreparedExample> prepared;
    for (const auto& ex : tiny.examples)
      prepared.push_back(system.prepare_train_example(ex));
    std::vector<const PreparedExample*> batch;
    for (const auto& p : prepared) batch.push_back(&p);

    std::vector<T64> inputs;
    for (const auto& p : system.seq2seq().params().params())
      inputs.push_back(p.tensor);
    auto f = [&] { return system.forward_loss(batch).l_abs; };
    const double err = grad_check<double>(f, inputs, h, coords_per_param);
    suite.bound(std::string("grad/full-model/") + strategy_name(s), err,
                limit);
  }
  {
    // extractor side: supervised scoring loss
    SummarizationSystem<double> system(tiny.config(Strategy::CIT), tiny.vocab,
                                       78);
    std::vector<T64> inputs;
    for (const auto& p : system.extractor().params().params())
      inputs.push_back(p.tensor);
    const auto& ex = tiny.examples[0];
    auto f = [&] {
      return saliency_loss(system.extractor().score(ex.source.ids),
                           *ex.labels);
    };
    const double err = grad_check<double>(f, inputs, h, coords_per_param);
    suite.bound("grad/extractor-loss", err, limit);
  }
}

// --- attention algebra -----------------------------------------------------

void attention_into(Suite& suite, int64_t configs) {
  std::mt19937_64 rng(0xA77E);
  double worst_row = 0, worst_const = 0, worst_se = 0;
  bool se_bitwise = true;
  for (int64_t c = 0; c < configs; ++c) {
    const int64_t d_choices[] = {4, 8, 16};
    const int64_t d = d_choices[rng() % 3];
    const int64_t heads = (rng() % 2) ? 2 : 1;
    const int64_t rows = 1 + rng() % 6;
    const int64_t keys = 1 + rng() % 8;
    ModelConfig cfg;
    cfg.d_model = d;
    cfg.heads = heads;

    ParamStore<float> store(rng());
    MultiHeadAttention<float> attn(store, "t", cfg);
    auto q_in = random_leaf<float>({rows, d}, rng, -2, 2, false);
    auto kv_in = random_leaf<float>({keys, d}, rng, -2, 2, false);
    auto scores = random_leaf<float>({keys}, rng, 0.05, 0.95, false);

    auto plain = attn.forward(q_in, kv_in, AttnMask::None);
    auto weighted = attn.forward(q_in, kv_in, AttnMask::None, scores);
    auto row_dev = [&](const TensorT<float>& a) {
      double worst = 0;
      for (int64_t i = 0; i < a.dim(0); ++i) {
        double sum = 0;
        for (int64_t j = 0; j < a.dim(1); ++j) sum += a.value()[i * a.dim(1) + j];
        worst = std::max(worst, std::abs(sum - 1.0));
      }
      return worst;
    };
    for (const auto& a : plain.head_attn) worst_row = std::max(worst_row, row_dev(a));
    for (const auto& a : weighted.head_attn)
      worst_row = std::max(worst_row, row_dev(a));
    if (rows == keys) {
      auto causal = attn.forward(q_in, q_in, AttnMask::Causal);
      for (const auto& a : causal.head_attn)
        worst_row = std::max(worst_row, row_dev(a));
    }

    // constant saliency cancels out of the SA reweighting
    const float c_val = 0.05f + float(rng() % 100) / 50.0f;
    auto constant = TensorT<float>::full({keys}, c_val);
    auto reweighted = attn.forward(q_in, kv_in, AttnMask::None, constant);
    for (size_t hd = 0; hd < plain.head_attn.size(); ++hd) {
      const auto& a0 = plain.head_attn[hd].value();
      const auto& a1 = reweighted.head_attn[hd].value();
      for (size_t i = 0; i < a0.size(); ++i)
        worst_const = std::max(worst_const, double(std::abs(a0[i] - a1[i])));
    }

    // SE with S = 1 must be bit-for-bit the identity
    auto hidden = random_leaf<float>({keys, d}, rng, -2, 2, false);
    auto ones = TensorT<float>::full({keys}, 1.0f);
    auto scaled = SummarizationSystem<float>::se_weight({hidden}, ones);
    se_bitwise &= std::memcmp(scaled.hidden.value().data(),
                              hidden.value().data(),
                              hidden.numel() * sizeof(float)) == 0;
    // and S = 0.5 exactly halves every entry
    auto halves = TensorT<float>::full({keys}, 0.5f);
    auto halved = SummarizationSystem<float>::se_weight({hidden}, halves);
    for (int64_t i = 0; i < hidden.numel(); ++i)
      worst_se = std::max(worst_se,
                          double(std::abs(halved.hidden.value()[i] -
                                          0.5f * hidden.value()[i])));
  }
  suite.bound("attention/row-sums", worst_row, 1e-6);
  suite.bound("attention/constant-saliency-invariance", worst_const, 1e-6);
  suite.record("attention/se-identity-bitwise", se_bitwise,
               se_bitwise ? "identical bytes" : "byte mismatch");
  suite.bound("attention/se-half-scaling", worst_se, 1e-6);
}

// --- oracle comparisons ----------------------------------------------------

void rouge_into(Suite& suite, int64_t cases) {
  std::mt19937_64 rng(0x10C5);
  auto random_tokens = [&](int64_t max_len) {
    std::uniform_int_distribution<int64_t> len(0, max_len);
    std::uniform_int_distribution<int> tok(0, 3);
    std::vector<std::string> out(len(rng));
    for (auto& t : out) t = std::string(1, char('a' + tok(rng)));
    return out;
  };
  int64_t mismatches = 0;
  for (int64_t i = 0; i < cases; ++i) {
    auto a = random_tokens(10);
    auto b = random_tokens(10);
    if (lcs_length(a, b) != oracles::brute_force_lcs(a, b)) ++mismatches;
  }
  suite.record("rouge/lcs-vs-enumeration", mismatches == 0,
               std::to_string(mismatches) + " mismatches in " +
                   std::to_string(cases) + " cases");

  auto hand = rouge_n({"the", "cat", "sat"}, {"the", "cat"}, 1);
  const double err = std::max({std::abs(hand.precision - 2.0 / 3),
                               std::abs(hand.recall - 1.0),
                               std::abs(hand.f1 - 0.8)});
  suite.bound("rouge/hand-case", err, 1e-9);
}

void labels_into(Suite& suite, int64_t cases) {
  std::mt19937_64 rng(0x1AB5);
  auto random_seq = [&](int64_t max_len) {
    std::uniform_int_distribution<int64_t> len(1, max_len);
    std::uniform_int_distribution<int> tok(0, 3);
    TokenSeq s;
    s.surfaces.resize(len(rng));
    for (auto& t : s.surfaces) t = std::string(1, char('a' + tok(rng)));
    s.sentences.emplace_back(0, s.size());
    return s;
  };
  int64_t mismatches = 0;
  for (int64_t i = 0; i < cases; ++i) {
    auto src = random_seq(10);
    auto sum = random_seq(10);
    auto pl = pseudo_labels(src, sum);
    int64_t count = 0;
    std::vector<std::string> chosen;
    for (int64_t t = 0; t < src.size(); ++t)
      if (pl.labels[t]) {
        ++count;
        chosen.push_back(src.surfaces[t]);
      }
    if (count != oracles::brute_force_lcs(src.surfaces, sum.surfaces) ||
        !oracles::is_subsequence(chosen, sum.surfaces))
      ++mismatches;
  }
  suite.record("labels/lcs-vs-enumeration", mismatches == 0,
               std::to_string(mismatches) + " mismatches in " +
                   std::to_string(cases) + " cases");

  auto corpus = synth_corpus(1234, 300);
  int64_t exact = 0;
  for (const auto& ex : corpus) {
    auto pl = pseudo_labels(ex.source, ex.summary);
    std::vector<int64_t> ones;
    for (int64_t i = 0; i < ex.source.size(); ++i)
      if (pl.labels[i]) ones.push_back(i);
    exact += ones == *ex.salient_positions;
  }
  suite.at_least("labels/synthetic-recovery",
                 double(exact) / double(corpus.size()), 0.99);
}

void seg_into(Suite& suite, int64_t docs) {
  std::mt19937_64 rng(0x5E6);
  auto random_tokens = [&](int64_t lo, int64_t hi) {
    std::uniform_int_distribution<int64_t> len(lo, hi);
    std::uniform_int_distribution<int> tok(0, 3);
    std::vector<std::string> out(len(rng));
    for (auto& t : out) t = std::string(1, char('a' + tok(rng)));
    return out;
  };
  double greedy_total = 0, best_total = 0;
  for (int64_t i = 0; i < docs; ++i) {
    std::uniform_int_distribution<int> n_sent(1, 6);
    std::vector<std::vector<std::string>> sents;
    for (int s = n_sent(rng); s > 0; --s) sents.push_back(random_tokens(1, 5));
    auto ref = random_tokens(1, 8);
    const int64_t cap = 3;
    auto picked = oracle_sentences(sents, ref, cap);
    std::vector<std::string> concat;
    for (int64_t j : picked)
      concat.insert(concat.end(), sents[j].begin(), sents[j].end());
    greedy_total += rouge_l(concat, ref).f1;
    best_total += oracles::exhaustive_best_rouge_l(sents, ref, cap);
  }
  suite.at_least("seg/greedy-vs-exhaustive",
                 best_total > 0 ? greedy_total / best_total : 1.0, 0.95);
}

void loss_tables_into(Suite& suite) {
  auto same = [](const std::vector<std::string>& a,
                 const std::vector<std::string>& b) { return a == b; };
  bool ok = true;
  ok &= same(abs_loss_terms(Strategy::FineTune), {"L_sum"});
  ok &= same(abs_loss_terms(Strategy::MT), {"L_sum", "L_sal"});
  ok &= same(abs_loss_terms(Strategy::SE), {"L_sum"});
  ok &= same(abs_loss_terms(Strategy::SE_MT), {"L_sum", "L_sal"});
  ok &= same(abs_loss_terms(Strategy::SA), {"L_sum"});
  ok &= same(abs_loss_terms(Strategy::SA_MT), {"L_sum", "L_sal"});
  ok &= same(abs_loss_terms(Strategy::SEG), {"L_sum"});
  ok &= same(abs_loss_terms(Strategy::CIT), {"L_sum"});
  ok &= same(abs_loss_terms(Strategy::CIT_SE), {"L_sum"});
  ok &= same(abs_loss_terms(Strategy::CIT_SA), {"L_sum"});
  for (Strategy s : {Strategy::SEG, Strategy::CIT, Strategy::CIT_SE,
                     Strategy::CIT_SA})
    ok &= same(ext_loss_terms(s), {"L_sal"});
  for (Strategy s : {Strategy::FineTune, Strategy::MT, Strategy::SE,
                     Strategy::SE_MT, Strategy::SA, Strategy::SA_MT})
    ok &= same(ext_loss_terms(s), {});
  suite.record("strategies/loss-term-table", ok,
               ok ? "all ten match" : "component mismatch");
}

void smoke_into(Suite& suite) {
  auto corpus = synth_corpus(55, 96);
  std::vector<TokenSeq> all;
  for (const auto& ex : corpus) {
    all.push_back(ex.source);
    all.push_back(ex.summary);
  }
  Vocabulary vocab = Vocabulary::build(all);
  for (auto& ex : corpus) {
    encode_with(vocab, ex.source);
    encode_with(vocab, ex.summary);
  }
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.vocab_size = vocab.size();
  cfg.max_src_len = 40;
  cfg.max_tgt_len = 8;
  cfg.strategy = Strategy::FineTune;
  SummarizationSystem<float> system(cfg, vocab, 5);
  std::vector<PreparedExample> prepared;
  for (const auto& ex : corpus)
    prepared.push_back(system.prepare_train_example(ex));
  AdamHyper hyper;
  hyper.lr = 3e-4;
  hyper.warmup_steps = 30;
  AdamOptimizer<float> opt(system.seq2seq().params().params(), hyper);
  std::vector<double> losses;
  for (int64_t step = 1; step <= 120; ++step) {
    auto idx = batch_indices(5, step, 4, int64_t(prepared.size()));
    std::vector<const PreparedExample*> batch;
    for (int64_t i : idx) batch.push_back(&prepared[i]);
    losses.push_back(system.train_step(batch, opt).l_abs);
  }
  auto window_mean = [&](int64_t end, int64_t len) {
    double s = 0;
    for (int64_t i = end - len; i < end; ++i) s += losses[i];
    return s / double(len);
  };
  const double early = window_mean(30, 30);
  const double late = window_mean(120, 30);
  suite.at_least("smoke/finetune-loss-drop", (early - late) / early, 0.2);
}

}  // namespace

std::vector<CheckResult> check_gradients(int64_t grad_coords_per_param) {
  Suite suite;
  primitives_into(suite);
  full_models_into(suite, grad_coords_per_param);
  return suite.results;
}

std::vector<CheckResult> check_attention_algebra(int64_t configs) {
  Suite suite;
  attention_into(suite, configs);
  return suite.results;
}

std::vector<CheckResult> check_rouge_oracle(int64_t cases) {
  Suite suite;
  rouge_into(suite, cases);
  return suite.results;
}

std::vector<CheckResult> check_label_oracle(int64_t cases) {
  Suite suite;
  labels_into(suite, cases);
  return suite.results;
}

std::vector<CheckResult> check_seg_oracle(int64_t docs) {
  Suite suite;
  seg_into(suite, docs);
  return suite.results;
}

std::vector<CheckResult> check_loss_tables() {
  Suite suite;
  loss_tables_into(suite);
  return suite.results;
}

std::vector<CheckResult> check_smoke_training() {
  Suite suite;
  smoke_into(suite);
  return suite.results;
}

std::vector<CheckResult> run_verification(const VerifyOptions& opts) {
  std::vector<CheckResult> all;
  auto append = [&all](std::vector<CheckResult> part) {
    for (auto& r : part) all.push_back(std::move(r));
  };
  append(check_gradients(opts.grad_coords_per_param));
  append(check_attention_algebra(opts.attention_configs));
  append(check_rouge_oracle(opts.oracle_cases));
  append(check_label_oracle(opts.oracle_cases));
  append(check_seg_oracle(opts.seg_docs));
  append(check_loss_tables());
  if (opts.include_smoke) append(check_smoke_training());
  return all;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace salsum
