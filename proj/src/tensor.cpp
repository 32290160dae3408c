#include "sama/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace sama {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dim");
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) {
    validate_shape(shape);
    node_ = std::make_shared<detail::Node>();
    node_->data.assign(numel_of(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
    validate_shape(shape);
    if (data.size() != numel_of(shape))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    check_finite(data, "tensor construction");
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= node_->shape.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
    if (node_->backward_fn) throw ContractError("cannot mutate the output of a recorded op");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
    std::size_t off = 0;
    std::size_t k = 0;
    for (auto i : index) {
        if (i >= s[k]) throw ShapeError("index out of range for " + shape_str(s));
        off = off * s[k] + i;
        ++k;
    }
    return node_->data[off];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (node_->backward_fn) throw ContractError("requires_grad can only be set on leaves");
    node_->requires_grad = on;
    if (!on) node_->grad.clear();
    return *this;
}

bool Tensor::is_leaf() const { return !node_->backward_fn; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

void Tensor::clear_grad() { node_->grad.clear(); }

Tensor Tensor::clone() const {
    Tensor t(shape(), std::vector<double>(node_->data));
    t.node_->requires_grad = node_->requires_grad && is_leaf();
    return t;
}

Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(node_->data)); }

void Tensor::backward() const {
    if (numel() != 1) throw ContractError("backward() requires a scalar loss, got " + shape_str(shape()));
    if (!node_->requires_grad) throw ContractError("backward() on a tensor that is not on a recorded graph");

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (auto* n : order)
        if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);
    node_->ensure_grad()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_mode_enabled() { return g_grad_enabled; }

void check_finite(std::span<const double> values, const char* op) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
    check_finite(data, op);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (g_grad_enabled &&
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); })) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& t : inputs) node->parents.push_back(t.node());
        node->backward_fn = std::move(backward);
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace sama
