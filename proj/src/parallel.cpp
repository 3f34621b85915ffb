#include "neurallog/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <string_view>

namespace neurallog {

std::size_t configured_threads() {
  const char* env = std::getenv("NEURALLOG_THREADS");
  if (env == nullptr) return 1;
  const std::string_view s(env);
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || ptr != s.data() + s.size() || n == 0) return 1;
  return n;
}

}  // namespace neurallog
