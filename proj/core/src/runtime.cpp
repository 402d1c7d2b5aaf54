#include "facefuse/runtime.hpp"

#include <cstdlib>
#include <string>

#include <Eigen/Core>

#include "facefuse/error.hpp"

namespace facefuse {

void set_threads(int count) {
  if (count < 1) throw InvalidArgument("thread count must be >= 1");
  Eigen::setNbThreads(count);
}

int thread_count() { return Eigen::nbThreads(); }

int configure_threads() {
  if (const char* env = std::getenv("FACEFUSE_THREADS"); env != nullptr && *env != '\0') {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(env, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != std::string(env).size() || n < 1) {
      throw InvalidArgument(std::string("FACEFUSE_THREADS must be a positive integer, got '") +
                            env + "'");
    }
    set_threads(n);
  }
  return thread_count();
}

}  // namespace facefuse
