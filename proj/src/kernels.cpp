#include "salsum/kernels.hpp"

#include <atomic>

namespace salsum::kernels {

namespace {
std::atomic<Execution> g_mode{Execution::Auto};
}

void set_execution(Execution mode) { g_mode.store(mode); }

Execution execution() { return g_mode.load(); }

bool use_parallel(int64_t work) {
#ifdef _OPENMP
  switch (g_mode.load()) {
    case Execution::Serial:
      return false;
    case Execution::Parallel:
      return true;
    case Execution::Auto:
      return work >= kAutoMinWork;
  }
  return false;
#else
  (void)work;
  return false;
#endif
}

}  // namespace salsum::kernels
