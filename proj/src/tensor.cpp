#include "layernr/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace lnr {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

void fail_shape(const std::string& msg) { throw std::invalid_argument(msg); }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return from_array(shape, Array::Zero(shape_size(shape)), requires_grad);
}

Tensor Tensor::full(const Shape& shape, Scalar v, bool requires_grad) {
    return from_array(shape, Array::Constant(shape_size(shape), v), requires_grad);
}

Tensor Tensor::from_array(const Shape& shape, Array values, bool requires_grad) {
    for (int d : shape)
        if (d <= 0) fail_shape("tensor extents must be positive: " + shape_str(shape));
    if ((long)values.size() != shape_size(shape))
        fail_shape("value count does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::from_vector(const Shape& shape, const std::vector<Scalar>& v,
                           bool requires_grad) {
    return from_array(shape, Eigen::Map<const Array>(v.data(), (long)v.size()),
                      requires_grad);
}

Tensor Tensor::scalar(Scalar v, bool requires_grad) {
    return from_array({1}, Array::Constant(1, v), requires_grad);
}

Scalar Tensor::item() const {
    if (size() != 1) fail_shape("item() on tensor of size " + std::to_string(size()));
    return node_->values[0];
}

const Array& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_->grad.size()) node_->grad.setZero();
}

Tensor Tensor::detach() const {
    return Tensor::from_array(node_->shape, node_->values, false);
}

Tensor make_op(Shape shape, Array values, std::vector<Tensor> parents,
               std::function<void(Node&)> backprop) {
    bool need = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            if (p.requires_grad()) { need = true; break; }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    if ((long)n->values.size() != shape_size(n->shape))
        fail_shape("op produced value count not matching shape " + shape_str(n->shape));
    n->requires_grad = need;
    if (need) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backprop = std::move(backprop);
    }
    return Tensor(n);
}

void backward(const Tensor& loss) {
    if (loss.size() != 1) fail_shape("backward() needs a scalar loss");
    if (!loss.requires_grad())
        fail_shape("backward() on a loss with no grad-enabled inputs");

    // Iterative post-order topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame { Node* n; size_t next; };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
    // Free the recorded graph; leaf gradients stay in place.
    for (Node* n : order) {
        n->backprop = nullptr;
        n->parents.clear();
    }
}

}  // namespace lnr
