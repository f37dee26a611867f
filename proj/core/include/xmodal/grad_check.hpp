#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tol = 0.0;
    bool passed() const { return max_rel_error < tol; }
};

// Compares analytic gradients against central finite differences. `builder`
// must rebuild the scalar graph from the given leaf inputs on every call.
GradCheckResult grad_check(const std::string& name,
                           const std::function<Tensor(const std::vector<Tensor>&)>& builder,
                           std::vector<Tensor> inputs, double step, double tol);

}  // namespace xmodal
