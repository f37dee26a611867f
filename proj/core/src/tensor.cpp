#include "xmodal/tensor.hpp"

#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace xmodal {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
    for (int64_t d : shape)
        if (d <= 0) throw Error("Tensor: non-positive dimension in shape " + shape_str(shape));
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw Error("Tensor: shape " + shape_str(shape) + " does not match value count " +
                    std::to_string(values.size()));
    node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
}

Tensor Tensor::zeros(const Shape& shape) {
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
}

Tensor Tensor::full(const Shape& shape, double value) {
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const std::vector<double>& Tensor::grad() const {
    if (!node || node->grad.empty()) throw Error("Tensor::grad: no gradient present");
    return node->grad;
}

void Tensor::zero_grad() {
    if (node) node->grad.assign(static_cast<size_t>(node->numel()), 0.0);
}

double Tensor::item() const {
    if (!node || node->numel() != 1)
        throw Error("Tensor::item: tensor is not a scalar, shape " +
                    (node ? shape_str(node->shape) : std::string("<null>")));
    return node->values[0];
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw Error("backward: loss must be a scalar, got shape " +
                    (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));

    // Iterative post-order topological sort over parents.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* n;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node.get(), 0});
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            TensorNode* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    // Per-sweep scratch buffers; persistent grads only receive the final sum.
    std::unordered_map<TensorNode*, std::vector<double>> scratch;
    scratch[loss.node.get()] = {1.0};

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        auto sit = scratch.find(n);
        if (sit == scratch.end()) continue;  // no gradient reached this node
        if (n->backprop) {
            GradSinks sinks(n->parents.size(), nullptr);
            for (size_t i = 0; i < n->parents.size(); ++i) {
                TensorNode* p = n->parents[i].get();
                if (!p->requires_grad) continue;
                auto& buf = scratch[p];
                if (buf.empty()) buf.assign(static_cast<size_t>(p->numel()), 0.0);
                sinks[i] = &buf;
            }
            n->backprop(sit->second, sinks);
        }
    }

    for (TensorNode* n : order) {
        if (!n->requires_grad) continue;
        auto sit = scratch.find(n);
        if (sit == scratch.end()) continue;
        if (n->grad.empty()) n->grad.assign(static_cast<size_t>(n->numel()), 0.0);
        for (size_t i = 0; i < sit->second.size(); ++i) n->grad[i] += sit->second[i];
    }
}

}  // namespace xmodal
