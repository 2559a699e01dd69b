// Times the serial reference kernels against the OpenMP variants and
// checks that both produce identical bytes. Run from the build tree:
//   ./tools/bench_kernels [reps]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "salsum/kernels.hpp"

using namespace salsum;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<float> random_vec(std::mt19937_64& rng, int64_t n) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <class F>
double time_reps(int reps, F&& f) {
  f();  // warm up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) f();
  return seconds_since(t0) / reps;
}

void bench_gemm(int reps, int64_t m, int64_t k, int64_t n) {
  std::mt19937_64 rng(1);
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<float> c_s(m * n), c_p(m * n);
  const double ts = time_reps(reps, [&] {
    kernels::gemm_nn_serial(a.data(), b.data(), c_s.data(), m, k, n, false);
  });
  const double tp = time_reps(reps, [&] {
    kernels::gemm_nn_parallel(a.data(), b.data(), c_p.data(), m, k, n, false);
  });
  const bool same =
      std::memcmp(c_s.data(), c_p.data(), c_s.size() * sizeof(float)) == 0;
  const double gflops = 2.0 * m * k * n / 1e9;
  std::printf("gemm_nn %4lldx%-4lldx%-4lld  serial %8.3f ms (%5.2f GF/s)  "
              "omp %8.3f ms (%5.2f GF/s)  speedup %4.2fx  %s\n",
              (long long)m, (long long)k, (long long)n, ts * 1e3, gflops / ts,
              tp * 1e3, gflops / tp, ts / tp,
              same ? "bitwise-equal" : "MISMATCH");
}

void bench_softmax(int reps, int64_t m, int64_t n) {
  std::mt19937_64 rng(2);
  auto x = random_vec(rng, m * n);
  std::vector<float> y_s(m * n), y_p(m * n);
  const double ts = time_reps(reps, [&] {
    kernels::softmax_rows_serial(x.data(), nullptr, y_s.data(), m, n);
  });
  const double tp = time_reps(reps, [&] {
    kernels::softmax_rows_parallel(x.data(), nullptr, y_p.data(), m, n);
  });
  const bool same =
      std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(float)) == 0;
  std::printf("softmax %5lldx%-5lld         serial %8.3f ms          omp "
              "%8.3f ms           speedup %4.2fx  %s\n",
              (long long)m, (long long)n, ts * 1e3, tp * 1e3, ts / tp,
              same ? "bitwise-equal" : "MISMATCH");
}

void bench_layer_norm(int reps, int64_t m, int64_t d) {
  std::mt19937_64 rng(3);
  auto x = random_vec(rng, m * d);
  auto gain = random_vec(rng, d);
  auto bias = random_vec(rng, d);
  std::vector<float> y_s(m * d), y_p(m * d);
  const double ts = time_reps(reps, [&] {
    kernels::layer_norm_serial(x.data(), gain.data(), bias.data(), y_s.data(),
                               m, d, 1e-5f);
  });
  const double tp = time_reps(reps, [&] {
    kernels::layer_norm_parallel(x.data(), gain.data(), bias.data(),
                                 y_p.data(), m, d, 1e-5f);
  });
  const bool same =
      std::memcmp(y_s.data(), y_p.data(), y_s.size() * sizeof(float)) == 0;
  std::printf("lnorm   %5lldx%-5lld         serial %8.3f ms          omp "
              "%8.3f ms           speedup %4.2fx  %s\n",
              (long long)m, (long long)d, ts * 1e3, tp * 1e3, ts / tp,
              same ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
#ifdef _OPENMP
  // spin up the thread pool so the first measurement is not charged for it
#pragma omp parallel
  {
  }
#endif
  std::printf("reps per measurement: %d\n\n", reps);
  bench_gemm(reps, 64, 64, 64);
  bench_gemm(reps, 256, 256, 256);
  bench_gemm(reps, 512, 512, 512);
  std::printf("\n");
  bench_softmax(reps, 4096, 256);
  bench_layer_norm(reps, 4096, 256);
  return 0;
}
