#include "m2r/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "m2r/error.hpp"

namespace m2r {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

}  // namespace detail

namespace {

thread_local bool grad_enabled = true;
thread_local bool probe_active = false;
thread_local std::uint64_t probe_hash = 0;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw DimensionError("tensor buffer holds " + std::to_string(values.size()) + " values but shape " +
                             to_string(shape) + " needs " + std::to_string(numel(shape)));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

void require_defined(const std::shared_ptr<detail::Node>& node) {
    if (!node) throw ContractError("operation on an undefined tensor");
}

}  // namespace

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool enabled) { grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = m2r::numel(shape);
    return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(new_node(Shape{}, std::vector<double>{value}, requires_grad));
}

const Shape& Tensor::shape() const {
    require_defined(node_);
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return m2r::numel(shape()); }

std::span<const double> Tensor::values() const {
    require_defined(node_);
    return node_->value;
}

std::span<double> Tensor::mutable_values() {
    require_defined(node_);
    return node_->value;
}

double Tensor::item() const {
    require_defined(node_);
    if (node_->value.size() != 1) {
        throw DimensionError("item() needs a single-element tensor, got shape " + to_string(node_->shape));
    }
    return node_->value[0];
}

bool Tensor::requires_grad() const {
    require_defined(node_);
    return node_->requires_grad;
}

void Tensor::set_requires_grad(bool flag) {
    require_defined(node_);
    node_->requires_grad = flag;
}

bool Tensor::has_grad() const {
    require_defined(node_);
    return !node_->grad.empty();
}

std::span<const double> Tensor::grad() const {
    require_defined(node_);
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    require_defined(node_);
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    require_defined(node_);
    node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::clear_grad() {
    require_defined(node_);
    node_->grad.clear();
    node_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
    require_defined(node_);
    return Tensor(new_node(node_->shape, node_->value, false));
}

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
    auto node = new_node(std::move(shape), std::move(value), false);
    if (grad_enabled) {
        bool any = false;
        for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
        if (any) {
            node->requires_grad = true;
            for (const Tensor* t : inputs) {
                if (t->defined()) node->inputs.push_back(t->node_);
            }
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node&)> backward_fn) {
    auto node = new_node(std::move(shape), std::move(value), false);
    if (grad_enabled) {
        bool any = false;
        for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
        if (any) {
            node->requires_grad = true;
            for (const auto& t : inputs) {
                if (t.defined()) node->inputs.push_back(t.node_);
            }
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward() on an undefined tensor");
    if (loss.numel() != 1) {
        throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward(): loss does not depend on any tensor that requires a gradient");
    }

    // Iterative post-order DFS -> topological order (inputs before outputs).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    auto* root = loss.node().get();
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            auto* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* node : order) {
        if (node->backward) node->grad.assign(node->value.size(), 0.0);
    }
    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* node = *it;
        if (node->backward) node->backward(*node);
    }
    for (auto* node : order) node->ensure_grad();
}

KinkProbe::KinkProbe() : previous_active_(probe_active), previous_hash_(probe_hash) {
    probe_active = true;
    probe_hash = 1469598103934665603ULL;
}

KinkProbe::~KinkProbe() {
    probe_active = previous_active_;
    probe_hash = previous_hash_;
}

std::uint64_t KinkProbe::signature() const { return probe_hash; }

bool KinkProbe::active() { return probe_active; }

void KinkProbe::record(std::uint64_t decision) {
    // FNV-1a over the 8 bytes of the decision word.
    for (int i = 0; i < 8; ++i) {
        probe_hash ^= (decision >> (8 * i)) & 0xffU;
        probe_hash *= 1099511628211ULL;
    }
}

}  // namespace m2r
