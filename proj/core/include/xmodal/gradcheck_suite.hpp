#pragma once

#include <vector>

#include "xmodal/grad_check.hpp"

namespace xmodal {

// Finite-difference checks covering every differentiable primitive once,
// both losses, and small instances of both encoders. Deterministic inputs.
std::vector<GradCheckResult> gradcheck_suite();

}  // namespace xmodal
