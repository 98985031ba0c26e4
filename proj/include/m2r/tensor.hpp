#pragma once

// Dense row-major float64 tensors with a reverse-mode autodiff tape.
//
// A Tensor is a cheap handle onto a shared graph node. Ops in ops.hpp build
// new nodes that remember their inputs and a backward closure; backward()
// walks the graph in reverse topological order and accumulates gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace m2r {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Gradient recording switch, per thread.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool enabled);
};

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    explicit operator bool() const noexcept { return defined(); }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    /// Direct write access. Only meaningful for leaves (parameters, inputs);
    /// mutating an interior node invalidates recorded backward closures.
    std::span<double> mutable_values();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad();

    /// Same values, no history.
    Tensor detach() const;

    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend Tensor make_result(Shape, std::vector<double>, std::initializer_list<const Tensor*>,
                              std::function<void(detail::Node&)>);
    friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                              std::function<void(detail::Node&)>);

    std::shared_ptr<detail::Node> node_;
};

/// Creates an op output. The backward closure is dropped (and no inputs are
/// retained) when grad mode is off or no input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward);
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node&)> backward);

/// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls;
/// interior gradients are reset first.
void backward(const Tensor& loss);

/// Records non-differentiable branch decisions (ReLU sign, max argmax, clamp
/// side) while active. Finite-difference checks compare signatures to detect
/// when a perturbation crosses a kink.
class KinkProbe {
public:
    KinkProbe();
    ~KinkProbe();
    KinkProbe(const KinkProbe&) = delete;
    KinkProbe& operator=(const KinkProbe&) = delete;

    std::uint64_t signature() const;

    static bool active();
    static void record(std::uint64_t decision);

private:
    bool previous_active_;
    std::uint64_t previous_hash_;
};

}  // namespace m2r
