#pragma once

#include <vector>

namespace vipatch {

// Closed search interval for one parameter dimension.
struct Interval {
  double low = 0.0;
  double high = 0.0;
};

using Bounds = std::vector<Interval>;

}  // namespace vipatch
