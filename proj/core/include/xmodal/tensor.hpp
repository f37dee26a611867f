#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmodal {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Gradient sinks aligned with a node's parents; null entries are parents
// that do not need a gradient.
using GradSinks = std::vector<std::vector<double>*>;

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first backward touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(const std::vector<double>& gout, const GradSinks& gin)> backprop;

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
};

// Value-semantics handle onto a shared graph node. Copying a Tensor aliases
// the node; the graph is built by the ops in ops.hpp.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return node != nullptr; }
    const Shape& shape() const { return node->shape; }
    int64_t numel() const { return node->numel(); }

    const std::vector<double>& values() const { return node->values; }
    std::vector<double>& values_mut() { return node->values; }

    bool has_grad() const { return node && !node->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    void set_requires_grad(bool rg) { node->requires_grad = rg; }
    bool requires_grad() const { return node->requires_grad; }

    // Scalar extraction; errors unless numel() == 1.
    double item() const;

    std::shared_ptr<TensorNode> node;
};

// Reverse-mode sweep from a scalar loss. Gradients of every reachable
// requires_grad tensor are accumulated (+=) into their grad buffers, so a
// second sweep without zeroing doubles them exactly.
void backward(const Tensor& loss);

}  // namespace xmodal
