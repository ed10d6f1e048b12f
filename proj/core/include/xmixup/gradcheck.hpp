#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xmixup {

struct GradcheckCase {
  std::string name;
  double max_relative_error = 0.0;
};

/// Backward pass against central finite differences for every differentiable
/// building block (attention, layer norm, cross-attention, mixup gate and mix,
/// each loss) and for the full dual-stream objective on a tiny model.
std::vector<GradcheckCase> run_gradcheck(std::uint64_t seed);

}  // namespace xmixup
