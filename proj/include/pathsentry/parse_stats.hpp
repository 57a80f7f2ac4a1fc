#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pathsentry {

// Line accounting for the text readers. Malformed lines are skipped; the first
// few messages are kept verbatim (with line numbers) and logged.
struct ParseStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::size_t vantage_mismatch = 0;
  std::vector<std::string> errors;

  void add_error(std::string message);
};

}  // namespace pathsentry
