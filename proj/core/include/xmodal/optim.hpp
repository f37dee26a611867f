#pragma once

#include <map>
#include <string>
#include <vector>

#include "xmodal/rng.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

// Named parameter map with deterministic (lexicographic) iteration order.
// Every parameter has requires_grad set.
class ParamStore {
public:
    Tensor& create(const std::string& path, Tensor t);
    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;
    bool contains(const std::string& path) const { return params_.count(path) > 0; }
    size_t size() const { return params_.size(); }

    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor> params_;
};

// Fan-balanced uniform init for a [fan_in, fan_out] weight matrix.
Tensor& init_linear_weight(ParamStore& store, const std::string& path, int64_t fan_in,
                           int64_t fan_out, Rng& rng);
Tensor& init_zeros(ParamStore& store, const std::string& path, const Shape& shape);
Tensor& init_ones(ParamStore& store, const std::string& path, const Shape& shape);
Tensor& init_uniform(ParamStore& store, const std::string& path, const Shape& shape, double lo,
                     double hi, Rng& rng);
// Conv weight [Cout,Cin,kh,kw] (or deconv [Cin,Cout,kh,kw]) with fan-based scale.
Tensor& init_conv_weight(ParamStore& store, const std::string& path, const Shape& shape,
                         int64_t fan_in, int64_t fan_out, Rng& rng);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. step() consumes the grads currently on
// the store's parameters and zeroes them afterwards.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t step_count() const { return step_; }

    void step(ParamStore& params);

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

// Epoch-indexed exponential decay: lr0 * decay^epoch.
inline double decayed_lr(double lr0, double decay, int64_t epoch) {
    double lr = lr0;
    for (int64_t i = 0; i < epoch; ++i) lr *= decay;
    return lr;
}

// Checkpoint format: magic "XMCL", version byte 1, u32-LE manifest byte
// length, UTF-8 JSON manifest (ordered [{path, shape}]), then the parameter
// buffers as little-endian f64 in manifest order.
void save_checkpoint(const ParamStore& params, const std::string& path);
// Loads into an existing store; paths and shapes must match exactly.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace xmodal
