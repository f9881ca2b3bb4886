#include "tractloop/parallel.hpp"

#include <atomic>

namespace tractloop {

namespace {
std::atomic<unsigned> configured_threads{0};
}

void set_thread_count(unsigned count) { configured_threads = count; }

unsigned thread_count() {
  const unsigned configured = configured_threads.load();
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace tractloop
