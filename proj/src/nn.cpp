#include "m2r/nn.hpp"

#include <cmath>

#include "m2r/error.hpp"
#include "m2r/ops.hpp"

namespace m2r {

ParameterStore::ParameterStore(std::uint64_t seed) : rng_(seed) {}

void ParameterStore::check_unique(const std::string& name) const {
    if (find_parameter(name) || find_buffer(name)) throw ContractError("duplicate parameter name '" + name + "'");
}

Parameter* ParameterStore::add_uniform(const std::string& name, Shape shape, double bound) {
    check_unique(name);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = dist(rng_);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->momentum.assign(values.size(), 0.0);
    p->tensor = Tensor::from_values(std::move(shape), std::move(values), true);
    parameters_.push_back(std::move(p));
    return parameters_.back().get();
}

Parameter* ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
    check_unique(name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->tensor = Tensor::full(std::move(shape), value, true);
    p->momentum.assign(p->tensor.numel(), 0.0);
    parameters_.push_back(std::move(p));
    return parameters_.back().get();
}

Buffer* ParameterStore::add_buffer(const std::string& name, Shape shape, double value) {
    check_unique(name);
    auto b = std::make_unique<Buffer>();
    b->name = name;
    b->values.assign(numel(shape), value);
    b->shape = std::move(shape);
    buffers_.push_back(std::move(b));
    return buffers_.back().get();
}

Parameter* ParameterStore::find_parameter(const std::string& name) const {
    for (const auto& p : parameters_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

Buffer* ParameterStore::find_buffer(const std::string& name) const {
    for (const auto& b : buffers_) {
        if (b->name == name) return b.get();
    }
    return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p->tensor.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : parameters_) p->tensor.clear_grad();
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t stride, std::size_t pad, bool with_bias)
    : stride_(stride), pad_(pad) {
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    weight_ = store.add_uniform(name + ".weight", {out_channels, in_channels, kernel, kernel}, std::sqrt(6.0 / fan_in));
    if (with_bias) bias_ = store.add_constant(name + ".bias", {out_channels}, 0.0);
}

Tensor Conv2d::operator()(const Tensor& x) const {
    return conv2d(x, weight_->tensor, bias_ ? bias_->tensor : Tensor{}, stride_, pad_);
}

std::size_t Conv2d::in_channels() const { return weight_->tensor.dim(1); }
std::size_t Conv2d::out_channels() const { return weight_->tensor.dim(0); }

BatchNorm2d::BatchNorm2d(ParameterStore& store, const std::string& name, std::size_t channels) {
    gamma_ = store.add_constant(name + ".gamma", {channels}, 1.0);
    beta_ = store.add_constant(name + ".beta", {channels}, 0.0);
    running_mean_ = store.add_buffer(name + ".running_mean", {channels}, 0.0);
    running_var_ = store.add_buffer(name + ".running_var", {channels}, 1.0);
}

Tensor BatchNorm2d::operator()(const Tensor& x, bool training) const {
    return batch_norm(x, gamma_->tensor, beta_->tensor, {running_mean_->values, running_var_->values}, training);
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in_features, std::size_t out_features) {
    weight_ = store.add_uniform(name + ".weight", {out_features, in_features},
                                std::sqrt(6.0 / static_cast<double>(in_features)));
    bias_ = store.add_constant(name + ".bias", {out_features}, 0.0);
}

Tensor Linear::operator()(const Tensor& x) const {
    return add(matmul(x, transpose(weight_->tensor, 0, 1)), bias_->tensor);
}

ConvBnRelu::ConvBnRelu(ParameterStore& store, const std::string& name, std::size_t in_channels,
                       std::size_t out_channels, std::size_t kernel)
    : conv_(store, name + ".conv", in_channels, out_channels, kernel, 1, kernel / 2),
      bn_(store, name + ".bn", out_channels) {}

Tensor ConvBnRelu::operator()(const Tensor& x, bool training) const { return relu(bn_(conv_(x), training)); }

void sgd_step(const std::vector<Parameter*>& params, const SgdOptions& options) {
    for (auto* p : params) {
        if (!p->tensor.has_grad()) throw ContractError("sgd_step: parameter '" + p->name + "' has no gradient");
    }
    for (auto* p : params) {
        auto w = p->tensor.mutable_values();
        const auto g = p->tensor.grad();
        auto& v = p->momentum;
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = options.momentum * v[i] + g[i] + options.weight_decay * w[i];
            w[i] -= options.learning_rate * v[i];
        }
        p->tensor.clear_grad();
    }
}

void sgd_step(const std::vector<std::unique_ptr<Parameter>>& params, const SgdOptions& options) {
    std::vector<Parameter*> raw;
    raw.reserve(params.size());
    for (const auto& p : params) raw.push_back(p.get());
    sgd_step(raw, options);
}

}  // namespace m2r
