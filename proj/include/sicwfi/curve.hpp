#pragma once

#include <vector>

namespace sicwfi {

/// Sampled y(x) with a shared axis.
struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

}  // namespace sicwfi
