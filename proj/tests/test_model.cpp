#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "salsum/corpus.hpp"
#include "salsum/model.hpp"

using namespace salsum;

namespace {

ModelConfig tiny_config(int64_t layers = 1, int64_t d = 8, int64_t heads = 2) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.d_model = d;
  cfg.heads = heads;
  cfg.vocab_size = 11;
  cfg.max_src_len = 16;
  cfg.max_tgt_len = 8;
  return cfg;
}

template <class Real>
TensorT<Real> random_leaf(Shape shape, std::mt19937_64& rng, double lo = -2,
                          double hi = 2) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return TensorT<Real>::leaf(std::move(shape), std::move(v), false);
}

}  // namespace

TEST_CASE("config validation") {
  auto cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.max_tgt_len = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("encode produces L x d and is position sensitive") {
  TransformerModel<float> model(tiny_config(2), 3, false);
  auto enc = model.encode({5, 6, 7, 8});
  CHECK(enc.hidden.shape() == Shape{4, 8});

  auto swapped = model.encode({6, 5, 7, 8});
  bool any_diff = false;
  for (int64_t i = 0; i < enc.hidden.numel(); ++i)
    any_diff |= enc.hidden.value()[i] != swapped.hidden.value()[i];
  CHECK(any_diff);
}

TEST_CASE("zero-layer encoder returns the raw embeddings") {
  TransformerModel<float> model(tiny_config(0), 4, false);
  const std::vector<int> ids = {5, 9, 6};
  auto enc = model.encode(ids);
  auto manual = add(embed(ids, model.params().find("tok_emb")),
                    embed({0, 1, 2}, model.params().find("enc.pos_emb")));
  CHECK(enc.hidden.value() == manual.value());
}

TEST_CASE("encode rejects overlong and empty inputs") {
  TransformerModel<float> model(tiny_config(), 5, false);
  std::vector<int> too_long(17, 5);
  CHECK_THROWS_AS(model.encode(too_long), std::invalid_argument);
  CHECK_THROWS_AS(model.encode({}), std::invalid_argument);
}

TEST_CASE("attention is uniform when the score weights vanish") {
  auto cfg = tiny_config(1, 4, 1);
  ParamStore<float> store(9);
  MultiHeadAttention<float> attn(store, "t", cfg);
  // zero the query projection: all scores become 0 -> uniform rows
  auto wq = store.find("t.wq");
  std::fill(wq.raw_value().begin(), wq.raw_value().end(), 0.0f);
  std::mt19937_64 rng(10);
  auto q_in = random_leaf<float>({3, 4}, rng);
  auto kv_in = random_leaf<float>({5, 4}, rng);
  auto out = attn.forward(q_in, kv_in, AttnMask::None);
  REQUIRE(out.head_attn.size() == 1);
  for (float v : out.head_attn[0].value())
    CHECK(v == doctest::Approx(0.2f).epsilon(1e-6));

  // with uniform rows, an override of [0.8, 0.2, ...] IS the reweighted row
  auto scores = TensorT<float>::leaf({5}, {0.8f, 0.2f, 0.4f, 0.4f, 0.2f});
  auto weighted = attn.forward(q_in, kv_in, AttnMask::None, scores);
  const float denom = 2.0f;
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j)
      CHECK(weighted.head_attn[0].value()[i * 5 + j] ==
            doctest::Approx(scores.value()[j] / denom).epsilon(1e-5));
}

TEST_CASE("uniform two-key attention row reweights to the scores") {
  auto cfg = tiny_config(1, 4, 1);
  ParamStore<float> store(11);
  MultiHeadAttention<float> attn(store, "t", cfg);
  auto wq = store.find("t.wq");
  std::fill(wq.raw_value().begin(), wq.raw_value().end(), 0.0f);
  std::mt19937_64 rng(12);
  auto q_in = random_leaf<float>({1, 4}, rng);
  auto kv_in = random_leaf<float>({2, 4}, rng);
  auto plain = attn.forward(q_in, kv_in, AttnMask::None);
  CHECK(plain.head_attn[0].value()[0] == doctest::Approx(0.5f).epsilon(1e-6));
  auto scores = TensorT<float>::leaf({2}, {0.8f, 0.2f});
  auto weighted = attn.forward(q_in, kv_in, AttnMask::None, scores);
  CHECK(weighted.head_attn[0].value()[0] ==
        doctest::Approx(0.8f).epsilon(1e-5));
  CHECK(weighted.head_attn[0].value()[1] ==
        doctest::Approx(0.2f).epsilon(1e-5));
}

TEST_CASE("fused override equals reweighting the plain rows after the fact") {
  auto cfg = tiny_config(1, 8, 2);
  ParamStore<float> store(27);
  MultiHeadAttention<float> attn(store, "t", cfg);
  std::mt19937_64 rng(28);
  auto q_in = random_leaf<float>({3, 8}, rng);
  auto kv_in = random_leaf<float>({5, 8}, rng);
  std::uniform_real_distribution<float> d(0.05f, 0.95f);
  std::vector<float> raw(5);
  for (auto& v : raw) v = d(rng);
  auto scores = TensorT<float>::leaf({5}, raw);

  auto plain = attn.forward(q_in, kv_in, AttnMask::None);
  auto fused = attn.forward(q_in, kv_in, AttnMask::None, scores);
  for (size_t h = 0; h < plain.head_attn.size(); ++h) {
    auto post_hoc =
        rows_renormalize(mul_colwise(plain.head_attn[h], scores));
    for (int64_t i = 0; i < post_hoc.numel(); ++i)
      CHECK(fused.head_attn[h].value()[i] ==
            doctest::Approx(post_hoc.value()[i]).epsilon(1e-5));
  }
}

TEST_CASE("weighted softmax gradients match finite differences") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::uniform_real_distribution<double> wide(-2.0, 2.0);
  std::vector<double> xs(15), raw(5), mix(15);
  for (auto& v : xs) v = wide(rng);
  for (auto& v : raw) v = unit(rng);
  for (auto& v : mix) v = wide(rng);
  auto x = TensorT<double>::leaf({3, 5}, xs, true);
  auto weights = TensorT<double>::leaf({5}, raw, true);
  auto mixer = TensorT<double>::leaf({3, 5}, mix, false);
  auto f = [&] {
    return sum_all(mul(weighted_softmax_rows(x, weights), mixer));
  };
  CHECK(grad_check<double>(f, {x, weights}, 1e-6) < 1e-4);
}

TEST_CASE("attention override length is validated") {
  auto cfg = tiny_config(1, 4, 2);
  ParamStore<float> store(13);
  MultiHeadAttention<float> attn(store, "t", cfg);
  std::mt19937_64 rng(14);
  auto q_in = random_leaf<float>({2, 4}, rng);
  auto kv_in = random_leaf<float>({3, 4}, rng);
  auto bad = TensorT<float>::full({2}, 0.5f);
  CHECK_THROWS_AS(attn.forward(q_in, kv_in, AttnMask::None, bad),
                  std::invalid_argument);
}

TEST_CASE("attention rows sum to one with and without reweighting") {
  std::mt19937_64 rng(15);
  auto cfg = tiny_config(1, 8, 2);
  ParamStore<float> store(16);
  MultiHeadAttention<float> attn(store, "t", cfg);
  for (int iter = 0; iter < 30; ++iter) {
    const int64_t rows = 1 + rng() % 5, keys = 1 + rng() % 6;
    auto q_in = random_leaf<float>({rows, 8}, rng);
    auto kv_in = random_leaf<float>({keys, 8}, rng);
    auto scores = random_leaf<float>({keys}, rng, 0.05, 0.95);
    for (auto result : {attn.forward(q_in, kv_in, AttnMask::None),
                        attn.forward(q_in, kv_in, AttnMask::None, scores)}) {
      for (const auto& a : result.head_attn)
        for (int64_t i = 0; i < rows; ++i) {
          double sum = 0;
          for (int64_t j = 0; j < keys; ++j) sum += a.value()[i * keys + j];
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
  }
}

TEST_CASE("decode_step returns vocab-sized logits") {
  TransformerModel<float> model(tiny_config(), 17, false);
  auto enc = model.encode({5, 6, 7});
  auto logits = model.decode_step(enc, {Vocabulary::kBos, 5});
  CHECK(logits.shape() == Shape{11});
}

TEST_CASE("decode rejects empty and overlong prefixes") {
  TransformerModel<float> model(tiny_config(), 18, false);
  auto enc = model.encode({5, 6});
  CHECK_THROWS_AS(model.decode_step(enc, {}), std::invalid_argument);
  std::vector<int> long_prefix(10, 5);
  CHECK_THROWS_AS(model.decode_step(enc, long_prefix), std::invalid_argument);
}

TEST_CASE("causal mask: later reference tokens cannot change earlier logits") {
  TransformerModel<float> model(tiny_config(2), 19, false);
  auto enc = model.encode({5, 6, 7, 8});
  std::vector<int> a = {Vocabulary::kBos, 5, 6, 7, 8};
  std::vector<int> b = a;
  const size_t p = 3;
  b[p] = 9;  // changed token at position p
  auto [la, ta] = model.decode_logits(enc, a);
  auto [lb, tb] = model.decode_logits(enc, b);
  const int64_t v = la.dim(1);
  for (size_t t = 0; t < p; ++t)
    for (int64_t j = 0; j < v; ++j)
      CHECK(la.value()[t * v + j] == lb.value()[t * v + j]);
  bool later_changed = false;
  for (int64_t j = 0; j < v; ++j)
    later_changed |= la.value()[p * v + j] != lb.value()[p * v + j];
  CHECK(later_changed);
}

TEST_CASE("all-ones saliency override reproduces plain logits bit for bit") {
  TransformerModel<float> model(tiny_config(2), 20, false);
  auto enc = model.encode({5, 6, 7, 8, 9});
  std::vector<int> prefix = {Vocabulary::kBos, 6, 7};
  auto plain = model.decode_step(enc, prefix);
  auto ones = TensorT<float>::full({5}, 1.0f);
  auto overridden = model.decode_step(enc, prefix, ones);
  CHECK(plain.value() == overridden.value());
}

TEST_CASE("greedy decode: EOS-rigged head yields the empty summary") {
  TransformerModel<float> model(tiny_config(1, 8, 2), 21, false);
  auto w = model.params().find("out.w");
  std::fill(w.raw_value().begin(), w.raw_value().end(), 0.0f);
  auto b = model.params().find("out.b");
  std::fill(b.raw_value().begin(), b.raw_value().end(), 0.0f);
  b.raw_value()[Vocabulary::kEos] = 50.0f;
  auto enc = model.encode({5, 6});
  CHECK(model.greedy_decode(enc).empty());
}

TEST_CASE("greedy decode: constant logits repeat the lowest id to the cap") {
  TransformerModel<float> model(tiny_config(1, 8, 2), 22, false);
  auto w = model.params().find("out.w");
  std::fill(w.raw_value().begin(), w.raw_value().end(), 0.0f);
  auto b = model.params().find("out.b");
  std::fill(b.raw_value().begin(), b.raw_value().end(), 0.0f);
  auto enc = model.encode({5, 6});
  auto out = model.greedy_decode(enc);
  CHECK(out.size() == 8);  // max_tgt_len
  for (int id : out) CHECK(id == 0);  // lowest id wins every tie
}

TEST_CASE("summary loss: uniform logits give ln V and batch order is "
          "irrelevant") {
  auto cfg = tiny_config(0, 4, 1);
  cfg.vocab_size = 11;
  TransformerModel<float> model(cfg, 23, false);
  // rig the output layer to produce identical logits everywhere
  auto w = model.params().find("out.w");
  std::fill(w.raw_value().begin(), w.raw_value().end(), 0.0f);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> batch = {
      {{5, 6}, {5}}, {{6, 7}, {7, 8}}};
  auto loss = model.summary_loss(batch);
  CHECK(loss.item() == doctest::Approx(std::log(11.0f)).epsilon(1e-6));

  TransformerModel<float> model2(cfg, 23, false);
  auto w2 = model2.params().find("out.w");
  std::fill(w2.raw_value().begin(), w2.raw_value().end(), 0.0f);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> reversed = {
      batch[1], batch[0]};
  CHECK(model2.summary_loss(reversed).item() ==
        doctest::Approx(loss.item()).epsilon(1e-7));
}

TEST_CASE("summary loss rejects empty batches and references") {
  TransformerModel<float> model(tiny_config(), 24, false);
  CHECK_THROWS_AS(model.summary_loss({}), std::invalid_argument);
  CHECK_THROWS_AS(model.summary_loss({{{5, 6}, {}}}), std::invalid_argument);
}

TEST_CASE("summary loss gradients match finite differences at d=8") {
  auto cfg = tiny_config(1, 8, 2);
  cfg.init_std = 0.4;  // keeps true gradients above the FD noise floor
  TransformerModel<double> model(cfg, 25, false);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> batch = {
      {{5, 6, 7}, {6, 8}}, {{9, 10}, {5}}};
  std::vector<TensorT<double>> inputs;
  for (const auto& p : model.params().params()) inputs.push_back(p.tensor);
  auto f = [&] { return model.summary_loss(batch); };
  CHECK(grad_check<double>(f, inputs, 1e-5, 6) < 1e-3);
}

TEST_CASE("same seed and config give identical models") {
  auto cfg = tiny_config(2);
  TransformerModel<float> a(cfg, 777, true);
  TransformerModel<float> b(cfg, 777, true);
  REQUIRE(a.params().params().size() == b.params().params().size());
  for (size_t i = 0; i < a.params().params().size(); ++i) {
    CHECK(a.params().params()[i].name == b.params().params()[i].name);
    CHECK(a.params().params()[i].tensor.value() ==
          b.params().params()[i].tensor.value());
  }
}

TEST_CASE("dropout in train mode perturbs outputs but eval mode is pure") {
  auto cfg = tiny_config(1);
  cfg.dropout = 0.3;
  TransformerModel<float> model(cfg, 26, false);
  auto eval1 = model.encode({5, 6, 7});
  auto eval2 = model.encode({5, 6, 7});
  CHECK(eval1.hidden.value() == eval2.hidden.value());

  std::mt19937_64 rng(1);
  FwdCtx train_ctx{true, &rng};
  auto trained = model.encode({5, 6, 7}, train_ctx);
  bool differs = false;
  for (int64_t i = 0; i < trained.hidden.numel(); ++i)
    differs |= trained.hidden.value()[i] != eval1.hidden.value()[i];
  CHECK(differs);

  FwdCtx broken{true, nullptr};
  CHECK_THROWS_AS(model.encode({5, 6}, broken), std::invalid_argument);
}
