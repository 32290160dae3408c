#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sama {

using Shape = std::vector<std::size_t>;

// Error taxonomy shared by every module.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major float64 tensor with optional reverse-mode gradient.
///
/// A Tensor is a handle: copies alias the same storage and graph node, the
/// way parameters and activations are shared in an autograd engine. Use
/// clone() for an independent deep copy. Data of a tensor produced by an
/// operation is immutable; only leaves may be written in place.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t numel() const;

    std::span<const double> data() const;
    // Mutable access is restricted to leaves (parameters, inputs).
    std::span<double> mutable_data();

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();
    void clear_grad();

    Tensor clone() const;   // deep copy, detached leaf, same requires_grad
    Tensor detach() const;  // shares nothing with the graph, copies data

    // Reverse-mode sweep from a one-element tensor.
    void backward() const;

    // Internal: graph node access for op implementations.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_mode_enabled();

// Builds the result node of an op. When recording is on and any input
// requires grad, the node links to its inputs and carries `backward`.
Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// Throws NumericError if any value is NaN or infinite.
void check_finite(std::span<const double> values, const char* op);

}  // namespace sama
