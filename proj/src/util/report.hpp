#pragma once

#include <string>
#include <vector>

namespace forge {

struct Violation {
  std::string path;  // e.g. "turns[1].alignment[2]"
  std::string message;

  bool operator==(const Violation&) const = default;
};

// Empty iff the checked object satisfies every invariant.
using ValidationReport = std::vector<Violation>;

}  // namespace forge
