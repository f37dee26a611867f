#include "xmodal/grad_check.hpp"

#include <cmath>

namespace xmodal {

GradCheckResult grad_check(const std::string& name,
                           const std::function<Tensor(const std::vector<Tensor>&)>& builder,
                           std::vector<Tensor> inputs, double step, double tol) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
        for (double v : in.values())
            if (!std::isfinite(v)) throw Error("grad_check(" + name + "): non-finite input");
    }

    Tensor loss = builder(inputs);
    if (loss.numel() != 1) throw Error("grad_check(" + name + "): builder must return a scalar");
    if (!std::isfinite(loss.item()))
        throw Error("grad_check(" + name + "): non-finite loss value");
    backward(loss);

    GradCheckResult result{name, 0.0, tol};
    for (auto& in : inputs) {
        const std::vector<double> analytic =
            in.has_grad() ? in.grad()
                          : std::vector<double>(in.values().size(), 0.0);
        for (size_t i = 0; i < in.values().size(); ++i) {
            const double orig = in.values()[i];
            in.values_mut()[i] = orig + step;
            const double fp = builder(inputs).item();
            in.values_mut()[i] = orig - step;
            const double fm = builder(inputs).item();
            in.values_mut()[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw Error("grad_check(" + name + "): non-finite perturbed loss");
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[i];
            // floor keeps finite-difference roundoff from dominating tiny grads
            const double scale = std::max({std::abs(a), std::abs(numeric), 1e-3});
            const double rel = std::abs(a - numeric) / scale;
            if (rel > result.max_rel_error) result.max_rel_error = rel;
        }
    }
    return result;
}

}  // namespace xmodal
