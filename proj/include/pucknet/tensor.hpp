// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pucknet/common.hpp"

namespace pucknet {

class Tensor;

namespace detail {

struct OpNode;

struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // allocated lazily, same length as values
    bool requires_grad = false;
    std::shared_ptr<OpNode> node; // producing op; null for leaves
};

struct OpNode {
    const char* name = "op";
    std::vector<Tensor> inputs;
    // Reads out.grad and accumulates into the inputs' grad buffers.
    std::function<void(const TensorData& out)> backprop;
};

} // namespace detail

// Value-semantic handle to an n-dimensional f64 array participating in a
// reverse-mode computation graph. Copies share storage; ops that produce new
// tensors record a node so backward() can replay the chain rule.
class Tensor {
public:
    Tensor() : data_(std::make_shared<detail::TensorData>()) {}

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : data_(std::make_shared<detail::TensorData>()) {
        if (numel(shape) != values.size())
            fail_contract("tensor shape ", shape_str(shape), " wants ", numel(shape),
                          " values, got ", values.size());
        data_->shape = std::move(shape);
        data_->values = std::move(values);
        data_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> v(numel(shape), 0.0);
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor full(Shape shape, double fill, bool requires_grad = false) {
        std::vector<double> v(numel(shape), fill);
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{1}, {v}, requires_grad);
    }

    const Shape& shape() const { return data_->shape; }
    std::size_t size() const { return data_->values.size(); }
    std::size_t dim(std::size_t i) const { return data_->shape.at(i); }

    std::vector<double>& values() { return data_->values; }
    const std::vector<double>& values() const { return data_->values; }

    double item() const {
        if (size() != 1) fail_contract("item() on non-scalar tensor ", shape_str(shape()));
        return data_->values[0];
    }

    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool on) { data_->requires_grad = on; }

    bool has_grad() const { return !data_->grad.empty(); }

    std::vector<double>& grad() {
        ensure_grad();
        return data_->grad;
    }
    const std::vector<double>& grad() const {
        if (data_->grad.empty())
            fail_contract("grad read before any backward pass on tensor ", shape_str(shape()));
        return data_->grad;
    }

    void ensure_grad() {
        if (data_->grad.size() != data_->values.size()) data_->grad.assign(data_->values.size(), 0.0);
    }

    void zero_grad() {
        if (!data_->grad.empty()) data_->grad.assign(data_->grad.size(), 0.0);
    }

    // Same storage?
    bool is(const Tensor& other) const { return data_ == other.data_; }

    detail::TensorData& data() { return *data_; }
    const detail::TensorData& data() const { return *data_; }

private:
    std::shared_ptr<detail::TensorData> data_;
};

namespace detail {

// Every op funnels through here: builds the output tensor and, when any input
// tracks gradients, attaches the node that backpropagates through it.
inline Tensor make_op_output(const char* name, Shape shape, std::vector<double> values,
                             std::vector<Tensor> inputs,
                             std::function<void(const TensorData&)> backprop) {
    Tensor out(std::move(shape), std::move(values));
    bool track = false;
    for (const Tensor& in : inputs)
        if (in.requires_grad()) track = true;
    if (track) {
        out.set_requires_grad(true);
        auto node = std::make_shared<OpNode>();
        node->name = name;
        node->inputs = std::move(inputs);
        node->backprop = std::move(backprop);
        out.data().node = std::move(node);
    }
    return out;
}

} // namespace detail

// Reverse-mode sweep. Seeds d(loss)/d(loss) = 1 and accumulates gradients into
// every requires-grad tensor reachable from `loss`. Grads accumulate across
// calls; callers zero them between steps.
inline void backward(Tensor loss) {
    if (loss.size() != 1)
        fail_contract("backward expects a scalar loss, got ", shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS; order is a pure function of graph structure,
    // which keeps repeated backward passes bit-identical.
    std::vector<detail::TensorData*> order;
    std::unordered_set<detail::TensorData*> seen;
    struct Frame {
        detail::TensorData* td;
        std::size_t next_child;
    };
    std::vector<Frame> stack;
    if (seen.insert(&loss.data()).second) stack.push_back({&loss.data(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        detail::OpNode* node = f.td->node.get();
        std::size_t n_children = node ? node->inputs.size() : 0;
        if (f.next_child < n_children) {
            detail::TensorData* child = &node->inputs[f.next_child++].data();
            if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(f.td);
            stack.pop_back();
        }
    }

    // Interior tensors are transients of this sweep: their grads restart at
    // zero every call. Leaves (parameters, inputs) keep accumulating.
    for (detail::TensorData* td : order) {
        if (td->node)
            td->grad.assign(td->values.size(), 0.0);
        else if (td->grad.size() != td->values.size())
            td->grad.assign(td->values.size(), 0.0);
    }
    loss.data().grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorData* td = *it;
        if (td->node && td->node->backprop) td->node->backprop(*td);
    }
}

} // namespace pucknet
