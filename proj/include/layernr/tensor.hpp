#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace lnr {

using Scalar = double;
using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;

inline long shape_size(const Shape& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the recorded computation graph. Values are flat row-major.
struct Node {
    Shape shape;
    Array values;
    Array grad;  // size 0 until first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backprop;

    long size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad = Array::Zero(values.size());
    }
};

// Scoped switch that disables graph recording (forward-only evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
private:
    bool prev_;
};

bool grad_enabled();

// Shared handle to a graph node. Copying is cheap and aliases storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, Scalar v, bool requires_grad = false);
    static Tensor from_array(const Shape& shape, Array values, bool requires_grad = false);
    static Tensor from_vector(const Shape& shape, const std::vector<Scalar>& v,
                              bool requires_grad = false);
    static Tensor scalar(Scalar v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    long size() const { return node_->values.size(); }
    int dim(int i) const { return node_->shape[i]; }
    int ndim() const { return (int)node_->shape.size(); }

    Array& values() { return node_->values; }
    const Array& values() const { return node_->values; }
    Scalar item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    const Array& grad() const;
    void zero_grad();

    // Same values, cut off from the graph.
    Tensor detach() const;

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Builds an op node. Parents are recorded only when recording is on and some
// parent requires grad; otherwise the result is a detached leaf.
Tensor make_op(Shape shape, Array values, std::vector<Tensor> parents,
               std::function<void(Node&)> backprop);

// Reverse pass from a scalar loss. Gradients accumulate into every
// grad-enabled leaf; interior graph links are freed afterwards.
void backward(const Tensor& loss);

[[noreturn]] void fail_shape(const std::string& msg);

}  // namespace lnr
