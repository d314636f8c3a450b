#pragma once

// Dense row-major N-D tensor with reverse-mode automatic differentiation.
// A Tensor is a value-semantics handle to a shared node; ops executed under
// grad mode link result nodes to their inputs and record a backprop closure.
// Tensors are immutable after forward construction except for gradient
// accumulation; a graph is single-threaded.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tsception/errors.hpp"

namespace tsception {

using Shape = std::vector<int>;

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

namespace detail {

template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop;  // reads this->grad, accumulates into parents

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }
};

// Grad recording is on by default; NoGradGuard switches it off per thread.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
class Tensor {
public:
    using Node = detail::TensorNode<S>;

    Tensor() : node_(std::make_shared<Node>()) {}

    explicit Tensor(Shape shape, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        validate_shape(shape);
        node_->shape = std::move(shape);
        node_->data.assign(shape_numel(node_->shape), S(0));
        node_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<S> data, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        validate_shape(shape);
        if (shape_numel(shape) != static_cast<long>(data.size())) {
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor scalar(S value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    long size() const { return static_cast<long>(node_->data.size()); }

    S* data() { return node_->data.data(); }
    const S* data() const { return node_->data.data(); }
    std::vector<S>& vec() { return node_->data; }
    const std::vector<S>& vec() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<S>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<S>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() const {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    // value of a one-element tensor
    S item() const {
        if (size() != 1) {
            throw DimensionError("item() requires a scalar tensor, got shape " +
                                 shape_str(shape()));
        }
        return node_->data[0];
    }

    std::shared_ptr<Node> node() const { return node_; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw DimensionError("tensor rank must be >= 1");
        for (int d : shape) {
            if (d < 1) throw DimensionError("shape entries must be >= 1, got " + shape_str(shape));
        }
    }

    std::shared_ptr<Node> node_;
};

namespace detail {

// Marks `out` as a graph node with the given parents when grad mode is on and
// any parent participates in differentiation. `make_backprop` is only invoked
// in that case; it receives the raw output node (owned by the closure's host,
// so no reference cycle).
template <typename S, typename F>
void attach(Tensor<S>& out, std::vector<Tensor<S>> parents, F&& make_backprop) {
    if (!grad_enabled()) return;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return;
    auto node = out.node();
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backprop = make_backprop(node.get());
}

}  // namespace detail

// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from
// `loss`. Repeated calls without zero_grad sum gradients; the graph survives.
template <typename S>
void backward(const Tensor<S>& loss) {
    using Node = detail::TensorNode<S>;
    if (loss.size() != 1) {
        throw DimensionError("backward() requires a scalar loss, got shape " +
                             shape_str(loss.shape()));
    }

    // iterative postorder DFS -> topological order (inputs before consumers)
    std::vector<Node*> topo;
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::vector<Node*> seen_sorted;
    auto mark = [&seen_sorted](Node* n) {
        auto it = std::lower_bound(seen_sorted.begin(), seen_sorted.end(), n);
        if (it != seen_sorted.end() && *it == n) return false;
        seen_sorted.insert(it, n);
        return true;
    };

    Node* root = loss.node().get();
    if (mark(root)) stack.push_back({root, 0});
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx++].get();
            if (mark(parent)) stack.push_back({parent, 0});
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Op outputs carry scratch gradients local to one pass; reset them so a
    // second backward over the same graph adds the same leaf gradients again.
    for (Node* node : topo) {
        if (node->backprop) node->grad.assign(node->data.size(), S(0));
    }

    root->ensure_grad();
    root->grad[0] += S(1);

    // reverse topological order: every node visited exactly once
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && !node->grad.empty()) node->backprop();
    }
}

}  // namespace tsception
