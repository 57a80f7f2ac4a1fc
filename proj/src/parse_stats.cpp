#include "pathsentry/parse_stats.hpp"

#include <spdlog/spdlog.h>

namespace pathsentry {

void ParseStats::add_error(std::string message) {
  constexpr std::size_t kKept = 20;
  if (errors.size() < kKept) {
    spdlog::warn("{}", message);
    errors.push_back(std::move(message));
  }
}

}  // namespace pathsentry
