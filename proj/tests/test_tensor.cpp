#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "salsum/tensor.hpp"

using namespace salsum;

namespace {

template <class Real>
TensorT<Real> random_leaf(Shape shape, std::mt19937_64& rng, Real lo = -2,
                          Real hi = 2, bool rg = true) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return TensorT<Real>::leaf(std::move(shape), std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul identity and hand product") {
  auto eye = Tensor::leaf({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::leaf({2, 2}, {1, 2, 3, 4});
  auto out = matmul(eye, m);
  CHECK(out.value() == std::vector<float>{1, 2, 3, 4});

  auto a = Tensor::leaf({1, 2}, {1, 2});
  auto b = Tensor::leaf({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == doctest::Approx(11.0f));
}

TEST_CASE("matmul shape error names both shapes") {
  auto a = Tensor::zeros({3, 4});
  auto b = Tensor::zeros({5, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: shape mismatch [3x4] vs [5x2]",
                       std::invalid_argument);
}

TEST_CASE("matmul gradients match finite differences") {
  std::mt19937_64 rng(1);
  auto a = random_leaf<double>({3, 4}, rng);
  auto b = random_leaf<double>({4, 2}, rng);
  auto w = random_leaf<double>({3, 2}, rng, -1, 1, false);  // fixed weights
  auto f = [&] { return sum_all(mul(matmul(a, b), w)); };
  CHECK(grad_check<double>(f, {a, b}, 1e-5) < 1e-4);
}

TEST_CASE("matmul_nt agrees with explicit transpose") {
  std::mt19937_64 rng(2);
  auto a = random_leaf<double>({3, 5}, rng);
  auto b = random_leaf<double>({4, 5}, rng);
  auto direct = matmul_nt(a, b);
  auto viaT = matmul(a, transpose(b));
  for (int64_t i = 0; i < direct.numel(); ++i)
    CHECK(direct.value()[i] == doctest::Approx(viaT.value()[i]).epsilon(1e-12));
  auto f = [&] { return mean_all(matmul_nt(a, b)); };
  CHECK(grad_check<double>(f, {a, b}, 1e-5) < 1e-4);
}

TEST_CASE("softmax symmetry and stability") {
  auto z = Tensor::leaf({1, 3}, {0, 0, 0});
  auto y = softmax_rows(z);
  for (float v : y.value()) CHECK(v == doctest::Approx(1.0f / 3).epsilon(1e-6));

  auto big = Tensor::leaf({1, 2}, {1000.f, 0.f});
  auto yb = softmax_rows(big);
  CHECK(yb.value()[0] == doctest::Approx(1.0f).epsilon(1e-6));
  CHECK(yb.value()[1] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(std::isfinite(yb.value()[0]));
}

TEST_CASE("softmax rows sum to one at large magnitude") {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 50; ++iter) {
    auto x = random_leaf<float>({4, 6}, rng, -1e4f, 1e4f, false);
    auto y = softmax_rows(x);
    for (int64_t i = 0; i < 4; ++i) {
      float s = 0;
      for (int64_t j = 0; j < 6; ++j) s += y.value()[i * 6 + j];
      CHECK(s == doctest::Approx(1.0f).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax rejects NaN input") {
  auto x = Tensor::leaf({1, 2}, {std::nanf(""), 0.f});
  CHECK_THROWS_AS(softmax_rows(x), std::invalid_argument);
}

TEST_CASE("softmax gradient matches finite differences") {
  std::mt19937_64 rng(4);
  auto x = random_leaf<double>({4, 5}, rng);
  auto w = random_leaf<double>({4, 5}, rng, -1, 1, false);
  auto f = [&] { return sum_all(mul(softmax_rows(x), w)); };
  CHECK(grad_check<double>(f, {x}, 1e-5) < 1e-4);
}

TEST_CASE("sigmoid values and gradient") {
  auto x = Tensor::leaf({3}, {0.f, -80.f, 80.f});
  auto y = sigmoid(x);
  CHECK(y.value()[0] == doctest::Approx(0.5f));
  CHECK(y.value()[1] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(y.value()[2] == doctest::Approx(1.0f).epsilon(1e-6));
  CHECK(std::isfinite(y.value()[1]));

  std::mt19937_64 rng(5);
  auto z = random_leaf<double>({6}, rng);
  auto w = random_leaf<double>({6}, rng, -1, 1, false);
  auto f = [&] { return sum_all(mul(sigmoid(z), w)); };
  CHECK(grad_check<double>(f, {z}, 1e-5) < 1e-4);
}

TEST_CASE("layer_norm handles constant rows and matches hand case") {
  auto x = Tensor::leaf({1, 4}, {3, 3, 3, 3});
  auto gain = Tensor::full({4}, 1.0f);
  auto bias = Tensor::zeros({4});
  auto y = layer_norm(x, gain, bias);
  for (float v : y.value()) CHECK(v == doctest::Approx(0.0f));

  auto x2 = Tensor::leaf({1, 2}, {1.f, -1.f});
  auto g2 = Tensor::full({2}, 1.0f);
  auto b2 = Tensor::zeros({2});
  auto y2 = layer_norm(x2, g2, b2);
  CHECK(y2.value()[0] == doctest::Approx(1.0f).epsilon(1e-4));
  CHECK(y2.value()[1] == doctest::Approx(-1.0f).epsilon(1e-4));
}

TEST_CASE("layer_norm rejects mismatched width") {
  auto x = Tensor::zeros({2, 4});
  auto g = Tensor::full({3}, 1.0f);
  auto b = Tensor::zeros({3});
  CHECK_THROWS_AS(layer_norm(x, g, b), std::invalid_argument);
}

TEST_CASE("layer_norm gradient matches finite differences") {
  std::mt19937_64 rng(6);
  auto x = random_leaf<double>({3, 8}, rng);
  auto g = random_leaf<double>({8}, rng, 0.5, 1.5);
  auto b = random_leaf<double>({8}, rng);
  auto w = random_leaf<double>({3, 8}, rng, -1, 1, false);
  auto f = [&] { return sum_all(mul(layer_norm(x, g, b), w)); };
  CHECK(grad_check<double>(f, {x, g, b}, 1e-5) < 1e-4);
}

TEST_CASE("embed gathers rows and accumulates repeated ids") {
  auto table = Tensor::leaf({3, 2}, {10, 11, 20, 21, 30, 31}, true);
  auto out = embed({0}, table);
  CHECK(out.value() == std::vector<float>{10, 11});

  auto out2 = embed({1, 1}, table);
  auto loss = sum_all(out2);
  backward(loss);
  CHECK(table.grad()[2] == doctest::Approx(2.0f));
  CHECK(table.grad()[0] == doctest::Approx(0.0f));

  CHECK_THROWS_AS(embed({3}, table), std::invalid_argument);

  std::mt19937_64 rng(7);
  auto t64 = random_leaf<double>({4, 3}, rng);
  auto w = random_leaf<double>({3, 3}, rng, -1, 1, false);
  auto f = [&] { return sum_all(mul(embed({2, 0, 2}, t64), w)); };
  CHECK(grad_check<double>(f, {t64}, 1e-5) < 1e-4);
}

TEST_CASE("cross entropy analytic values") {
  auto peaked = Tensor::leaf({2, 3}, {50, 0, 0, 0, 50, 0});
  CHECK(cross_entropy(peaked, {0, 1}).item() ==
        doctest::Approx(0.0f).epsilon(1e-6));

  auto uniform = Tensor::zeros({3, 4});
  CHECK(cross_entropy(uniform, {0, 1, 2}).item() ==
        doctest::Approx(std::log(4.0f)));

  CHECK_THROWS_AS(cross_entropy(uniform, {0, 1, 4}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(uniform, {0}), std::invalid_argument);
}

TEST_CASE("cross entropy is stable at huge logits") {
  auto big = Tensor::leaf({1, 2}, {95.f, -95.f});
  auto loss = cross_entropy(big, {0});
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("cross entropy gradient matches finite differences") {
  std::mt19937_64 rng(8);
  auto logits = random_leaf<double>({4, 6}, rng);
  auto f = [&] { return cross_entropy(logits, std::vector<int>{1, 0, 5, 2}); };
  CHECK(grad_check<double>(f, {logits}, 1e-5) < 1e-4);
}

TEST_CASE("binary cross entropy analytic values") {
  auto perfect = Tensor::leaf({2}, {1.0f, 0.0f});
  CHECK(binary_cross_entropy(perfect, {1, 0}).item() ==
        doctest::Approx(0.0f).epsilon(1e-5));

  auto half = Tensor::full({5}, 0.5f);
  CHECK(binary_cross_entropy(half, {1, 0, 1, 1, 0}).item() ==
        doctest::Approx(std::log(2.0f)));

  CHECK_THROWS_AS(binary_cross_entropy(half, {1, 0}), std::invalid_argument);
}

TEST_CASE("binary cross entropy gradient through sigmoid") {
  std::mt19937_64 rng(9);
  auto z = random_leaf<double>({7}, rng);
  auto f = [&] {
    return binary_cross_entropy(sigmoid(z),
                                std::vector<int>{1, 0, 1, 1, 0, 0, 1});
  };
  CHECK(grad_check<double>(f, {z}, 1e-5) < 1e-4);
}

TEST_CASE("backward basics") {
  auto x = Tensor::leaf({3}, {1, 2, 3}, true);
  auto loss = sum_all(x);
  backward(loss);
  CHECK(x.grad() == std::vector<float>{1, 1, 1});

  auto y = Tensor::leaf({3}, {4, 5, 6}, true);
  auto loss2 = sum_all(mul(x, y));
  backward(loss2);
  CHECK(x.grad() == std::vector<float>{4, 5, 6});
  CHECK(y.grad() == std::vector<float>{1, 2, 3});
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = Tensor::leaf({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0f)), std::invalid_argument);
}

TEST_CASE("second backward reproduces identical grads") {
  std::mt19937_64 rng(10);
  auto x = random_leaf<float>({4}, rng);
  auto loss = sum_all(mul(sigmoid(x), x));
  backward(loss);
  auto first = x.grad();
  backward(loss);
  CHECK(x.grad() == first);
}

TEST_CASE("shared subexpression equals sum of duplicated paths") {
  std::vector<float> vals = {0.3f, -0.7f, 1.2f};
  auto x = Tensor::leaf({3}, vals, true);
  auto u = sigmoid(x);
  backward(sum_all(mul(u, u)));
  auto shared_grad = x.grad();

  auto x1 = Tensor::leaf({3}, vals, true);
  auto x2 = Tensor::leaf({3}, vals, true);
  backward(sum_all(mul(sigmoid(x1), sigmoid(x2))));
  for (int i = 0; i < 3; ++i)
    CHECK(shared_grad[i] ==
          doctest::Approx(x1.grad()[i] + x2.grad()[i]).epsilon(1e-6));
}

TEST_CASE("grad of every leaf has the leaf's shape") {
  std::mt19937_64 rng(11);
  auto a = random_leaf<float>({3, 4}, rng);
  auto b = random_leaf<float>({4, 2}, rng);
  auto g = random_leaf<float>({2}, rng, 0.5, 1.5);
  auto bias = random_leaf<float>({2}, rng);
  backward(mean_all(layer_norm(matmul(a, b), g, bias)));
  CHECK(a.grad().size() == 12);
  CHECK(b.grad().size() == 8);
  CHECK(g.grad().size() == 2);
  CHECK(bias.grad().size() == 2);
}

TEST_CASE("row helpers: rowwise, colwise, renormalize") {
  auto x = Tensor::leaf({2, 2}, {1, 2, 3, 4}, true);
  auto sr = Tensor::leaf({2}, {2, 10}, true);
  CHECK(mul_rowwise(x, sr).value() == std::vector<float>{2, 4, 30, 40});
  auto sc = Tensor::leaf({2}, {2, 10}, true);
  CHECK(mul_colwise(x, sc).value() == std::vector<float>{2, 20, 6, 40});

  auto a = Tensor::leaf({1, 2}, {0.4f, 0.1f}, true);
  auto r = rows_renormalize(a);
  CHECK(r.value()[0] == doctest::Approx(0.8f));
  CHECK(r.value()[1] == doctest::Approx(0.2f));

  auto zero = Tensor::leaf({1, 2}, {0.f, 0.f});
  CHECK_THROWS_AS(rows_renormalize(zero), std::domain_error);

  std::mt19937_64 rng(12);
  auto x64 = random_leaf<double>({3, 4}, rng, 0.1, 2.0);
  auto s64 = random_leaf<double>({4}, rng, 0.1, 2.0);
  auto w = random_leaf<double>({3, 4}, rng, -1, 1, false);
  auto f = [&] {
    return sum_all(mul(rows_renormalize(mul_colwise(x64, s64)), w));
  };
  CHECK(grad_check<double>(f, {x64, s64}, 1e-6) < 1e-4);
}

TEST_CASE("slice, concat, transpose, reshape gradients") {
  std::mt19937_64 rng(13);
  auto x = random_leaf<double>({3, 6}, rng);
  auto w = random_leaf<double>({4, 6}, rng, -1, 1, false);
  auto f = [&] {
    auto left = slice_cols(x, 0, 2);
    auto right = transpose(transpose(slice_cols(x, 2, 6)));
    return sum_all(mul(reshape(concat_cols<double>({left, right, left}), {4, 6}),
                       w));
  };
  CHECK(grad_check<double>(f, {x}, 1e-5) < 1e-4);
}

TEST_CASE("gelu gradient matches finite differences") {
  std::mt19937_64 rng(14);
  auto x = random_leaf<double>({9}, rng);
  auto w = random_leaf<double>({9}, rng, -1, 1, false);
  auto f = [&] { return sum_all(mul(gelu(x), w)); };
  CHECK(grad_check<double>(f, {x}, 1e-5) < 1e-4);
}

TEST_CASE("grad_check is exact for linear functions") {
  std::mt19937_64 rng(15);
  auto x = random_leaf<double>({5}, rng);
  auto f = [&] { return sum_all(scale(x, 3.0)); };
  CHECK(grad_check<double>(f, {x}, 1e-5) < 1e-9);
}

// Negative control: a deliberately wrong softmax backward must be flagged.
TEST_CASE("grad_check detects a corrupted softmax backward") {
  std::mt19937_64 rng(16);
  auto x = random_leaf<double>({2, 4}, rng);
  auto w = random_leaf<double>({2, 4}, rng, 0.5, 1.5, false);
  auto corrupt_softmax = [](const Tensor64& in) {
    auto good = softmax_rows(in);
    auto node = detail::make_node<double>(good.shape(), good.value());
    auto xn = in.handle();
    detail::link<double>(node, {xn}, [xn](TensorNode<double>& self) {
      // drops the rowdot coupling term
      for (size_t i = 0; i < self.grad.size(); ++i)
        xn->grad[i] += self.grad[i] * self.value[i];
    });
    return Tensor64::from_node(node);
  };
  auto f = [&] { return sum_all(mul(corrupt_softmax(x), w)); };
  CHECK(grad_check<double>(f, {x}, 1e-5) > 1e-2);
}

TEST_CASE("dropout keeps expectation and is identity at rate zero") {
  std::mt19937_64 rng(17);
  auto x = Tensor::full({1000}, 1.0f, true);
  auto y = dropout(x, 0.0, rng);
  CHECK(y.handle() == x.handle());

  auto z = dropout(x, 0.25, rng);
  double mean = 0;
  for (float v : z.value()) mean += v;
  mean /= z.numel();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("average of scalar losses") {
  auto a = Tensor::scalar(1.0f, true);
  auto b = Tensor::scalar(3.0f, true);
  auto m = average<float>({a, b});
  CHECK(m.item() == doctest::Approx(2.0f));
  backward(m);
  CHECK(a.grad()[0] == doctest::Approx(0.5f));
  CHECK_THROWS_AS(average<float>({}), std::invalid_argument);
}
