#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "loralab/error.hpp"

namespace loralab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until gradient flows into this node
    bool requires_grad = false;
    std::int64_t tape_id = -1;  // index of the producing tape entry; -1 = leaf
    const void* tape = nullptr;  // owning tape, null for leaves
};

}  // namespace detail

// Shared-handle dense tensor of 64-bit reals. Copies alias the same buffer;
// clone()/detach() make deep copies. Invariant: product(shape) == data.size().
class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

    static Tensor zeros(Shape shape) {
        Tensor t;
        const std::size_t n = shape_numel(shape);
        t.node_->shape = std::move(shape);
        t.node_->data.assign(n, 0.0);
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<double> data) {
        if (shape_numel(shape) != data.size()) {
            fail(ErrorKind::contract,
                 "tensor: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
        }
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        return t;
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::size_t rows() const {
        require_2d("rows");
        return node_->shape[0];
    }
    std::size_t cols() const {
        require_2d("cols");
        return node_->shape[1];
    }

    bool is_scalar() const { return numel() == 1; }

    double item() const {
        if (!is_scalar()) {
            fail(ErrorKind::contract,
                 "tensor: item() on non-scalar " + shape_str(shape()));
        }
        return node_->data[0];
    }

    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& mutable_data() { return node_->data; }

    double at(std::size_t r, std::size_t c) const {
        require_2d("at");
        return node_->data[r * node_->shape[1] + c];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& grad_buffer() {
        if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    std::int64_t tape_id() const { return node_->tape_id; }

    // Deep copy that is a leaf with no gradient; never receives gradient
    // unless explicitly marked trainable again.
    Tensor detach() const {
        Tensor t;
        t.node_->shape = node_->shape;
        t.node_->data = node_->data;
        return t;
    }

    Tensor clone() const {
        Tensor t = detach();
        t.node_->requires_grad = node_->requires_grad;
        return t;
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& handle() const { return node_; }

private:
    void require_2d(const char* who) const {
        if (node_->shape.size() != 2) {
            fail(ErrorKind::contract, std::string("tensor: ") + who +
                                          " on non-matrix " + shape_str(shape()));
        }
    }

    std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace loralab
