#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vat/tensor.hpp"

namespace vat {

using NodeId = std::size_t;

// Named trainable tensor. Gradients accumulate (sum) across backward passes
// and graph paths until zero_grad() is called.
struct Parameter {
    std::string id;
    Tensor value;
    Tensor grad;

    Parameter(std::string name, Tensor v) : id(std::move(name)), value(std::move(v)), grad(value.shape()) {}
    void zero_grad() { grad = Tensor(value.shape()); }
};

enum class Padding { same, valid };

// Reverse-mode computation tape. Forward calls append nodes in topological
// order; backward(root) runs one reverse sweep and accumulates gradients into
// every bound Parameter. A tape belongs to a single training step; backward
// may run exactly once.
class Tape {
public:
    // --- leaves ---
    NodeId constant(Tensor v);
    NodeId param(Parameter& p);

    // --- linear algebra / convolution ---
    NodeId matmul(NodeId a, NodeId b);                 // [m×k]·[k×n] -> [m×n]
    NodeId conv2d(NodeId x, NodeId w, Padding pad);    // [N×C×H×W] ⋆ [F×C×kh×kw], stride 1
    NodeId maxpool2(NodeId x);                         // 2×2 window, stride 2

    // --- elementwise ---
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId log(NodeId x);
    NodeId sqrt(NodeId x);       // derivative treated as 0 where the output ~ 0
    NodeId abs(NodeId x);        // subgradient 0 at 0
    NodeId clamp(NodeId x, double lo, double hi);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId affine(NodeId x, double a, double b);       // a*x + b
    NodeId scale(NodeId x, double a) { return affine(x, a, 0.0); }
    NodeId mul_const(NodeId x, Tensor c);              // x ⊙ c
    NodeId add_rowvec(NodeId x, NodeId b);             // [B×d] + [d]
    NodeId add_chanvec(NodeId x, NodeId b);            // [N×C×H×W] + [C]

    // --- reductions ---
    NodeId spatial_mean(NodeId x);  // [N×C×H×W] -> [N×C]
    NodeId spatial_var(NodeId x);   // unbiased (n-1); spatial extent must be >= 2
    NodeId mean_all(NodeId x);      // -> scalar
    NodeId sum_all(NodeId x);       // -> scalar

    // --- structure ---
    NodeId concat(const std::vector<NodeId>& xs, std::size_t axis);
    NodeId reshape(NodeId x, Shape shape);
    NodeId flatten(NodeId x) { return reshape(x, {value(x).numel()}); }
    NodeId segment(NodeId x, std::size_t offset, std::size_t len);  // rank-1 contiguous slice

    // Reversed gradient: identity forward, upstream gradient multiplied by -1.
    NodeId grl(NodeId x);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    // Gradient of the backward root w.r.t. node id; zeros if the node does not
    // influence the root. Only valid after backward().
    const Tensor& grad(NodeId id) const;
    void backward(NodeId root);
    bool backward_done() const { return backward_done_; }
    std::size_t size() const { return nodes_.size(); }

private:
    // One record per forward op: kind tag, output value, and a closure that
    // routes the accumulated output gradient to the parents.
    struct Node {
        const char* kind;
        Tensor value;
        std::function<void(Tape&, const Tensor&)> backprop;  // empty for leaves
        Parameter* bound = nullptr;
    };

    NodeId push(const char* kind, Tensor value, std::function<void(Tape&, const Tensor&)> backprop,
                Parameter* bound = nullptr);
    void add_grad(NodeId id, const Tensor& delta);
    const Tensor& checked(NodeId id) const { return nodes_[id].value; }

    std::vector<Node> nodes_;
    mutable std::vector<Tensor> grads_;
    bool backward_done_ = false;
};

}  // namespace vat
