#include "xmodal/rng.hpp"

#include "xmodal/tensor.hpp"

namespace xmodal {

std::vector<int64_t> sample_without_replacement(Rng& rng, int64_t n, int64_t k) {
    if (k < 0 || k > n)
        throw Error("sample_without_replacement: k=" + std::to_string(k) + " out of range for n=" +
                    std::to_string(n));
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<int64_t> out(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        const int64_t j = i + rng.uniform_int(n - i);
        std::swap(pool[i], pool[j]);
        out[i] = pool[i];
    }
    return out;
}

}  // namespace xmodal
