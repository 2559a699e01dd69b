#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "salsum/kernels.hpp"

using namespace salsum;

namespace {

std::vector<float> random_vec(std::mt19937_64& rng, int64_t n) {
  std::uniform_real_distribution<float> d(-2.0f, 2.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

// The parallel kernels partition rows but keep the per-element operation
// order of the serial reference, so results must be bitwise identical.
TEST_CASE("gemm parallel matches serial bitwise") {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 20; ++iter) {
    const int64_t m = 1 + rng() % 40, k = 1 + rng() % 40, n = 1 + rng() % 40;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    auto bt = random_vec(rng, n * k);
    auto at = random_vec(rng, k * m);

    std::vector<float> c_s(m * n), c_p(m * n);
    kernels::gemm_nn_serial(a.data(), b.data(), c_s.data(), m, k, n, false);
    kernels::gemm_nn_parallel(a.data(), b.data(), c_p.data(), m, k, n, false);
    CHECK(c_s == c_p);

    kernels::gemm_nt_serial(a.data(), bt.data(), c_s.data(), m, k, n, false);
    kernels::gemm_nt_parallel(a.data(), bt.data(), c_p.data(), m, k, n, false);
    CHECK(c_s == c_p);

    kernels::gemm_tn_serial(at.data(), b.data(), c_s.data(), m, k, n, false);
    kernels::gemm_tn_parallel(at.data(), b.data(), c_p.data(), m, k, n, false);
    CHECK(c_s == c_p);
  }
}

TEST_CASE("gemm accumulate adds on top of existing values") {
  std::mt19937_64 rng(11);
  const int64_t m = 5, k = 7, n = 3;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<float> base = random_vec(rng, m * n);
  std::vector<float> fresh(m * n);
  kernels::gemm_nn_serial(a.data(), b.data(), fresh.data(), m, k, n, false);
  std::vector<float> acc = base;
  kernels::gemm_nn_serial(a.data(), b.data(), acc.data(), m, k, n, true);
  for (int64_t i = 0; i < m * n; ++i)
    CHECK(acc[i] == doctest::Approx(base[i] + fresh[i]).epsilon(1e-6));
}

TEST_CASE("softmax and layer norm parallel match serial bitwise") {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 20; ++iter) {
    const int64_t m = 1 + rng() % 30, n = 1 + rng() % 30;
    auto x = random_vec(rng, m * n);
    std::vector<float> y_s(m * n), y_p(m * n);
    kernels::softmax_rows_serial(x.data(), nullptr, y_s.data(), m, n);
    kernels::softmax_rows_parallel(x.data(), nullptr, y_p.data(), m, n);
    CHECK(y_s == y_p);

    auto gain = random_vec(rng, n);
    auto bias = random_vec(rng, n);
    kernels::layer_norm_serial(x.data(), gain.data(), bias.data(), y_s.data(),
                               m, n, 1e-5f);
    kernels::layer_norm_parallel(x.data(), gain.data(), bias.data(),
                                 y_p.data(), m, n, 1e-5f);
    CHECK(y_s == y_p);
  }
}

TEST_CASE("execution mode dispatch") {
  kernels::set_execution(kernels::Execution::Serial);
  CHECK_FALSE(kernels::use_parallel(1 << 20));
#ifdef _OPENMP
  kernels::set_execution(kernels::Execution::Parallel);
  CHECK(kernels::use_parallel(8));
  kernels::set_execution(kernels::Execution::Auto);
  CHECK(kernels::use_parallel(kernels::kAutoMinWork));
  CHECK_FALSE(kernels::use_parallel(kernels::kAutoMinWork - 1));
#endif
  kernels::set_execution(kernels::Execution::Auto);
}

TEST_CASE("masked softmax zeroes excluded positions") {
  const int64_t m = 2, n = 3;
  std::vector<float> x = {1.f, 2.f, 3.f, 0.f, 0.f, 0.f};
  std::vector<uint8_t> mask = {1, 0, 1, 1, 1, 1};
  std::vector<float> y(m * n);
  kernels::softmax_rows_serial(x.data(), mask.data(), y.data(), m, n);
  CHECK(y[1] == 0.0f);
  CHECK(y[0] + y[2] == doctest::Approx(1.0f).epsilon(1e-6));
  for (int j = 3; j < 6; ++j)
    CHECK(y[j] == doctest::Approx(1.0f / 3).epsilon(1e-6));
}
