#include "ssg/parallel.hpp"

#include <cstdlib>

#include "ssg/error.hpp"

namespace ssg {

std::size_t worker_threads(std::size_t requested) {
  if (requested) return requested;
  if (const char* env = std::getenv("SSG_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw ConfigError("SSG_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
  }
  return 1;
}

}  // namespace ssg
