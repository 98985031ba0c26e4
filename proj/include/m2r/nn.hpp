#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "m2r/tensor.hpp"

namespace m2r {

/// A trainable tensor plus its optimizer momentum. momentum.size() always
/// equals tensor.numel().
struct Parameter {
    std::string name;
    Tensor tensor;
    std::vector<double> momentum;
};

/// Non-trainable state (batch-norm running statistics).
struct Buffer {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

/// Owns every parameter and buffer of a model. Addresses are stable for the
/// lifetime of the store, so layers keep raw pointers into it.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed);

    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;
    ParameterStore(ParameterStore&&) = default;
    ParameterStore& operator=(ParameterStore&&) = default;

    /// Uniform in [-bound, bound] from the store's RNG.
    Parameter* add_uniform(const std::string& name, Shape shape, double bound);
    Parameter* add_constant(const std::string& name, Shape shape, double value);
    Buffer* add_buffer(const std::string& name, Shape shape, double value);

    const std::vector<std::unique_ptr<Parameter>>& parameters() const { return parameters_; }
    const std::vector<std::unique_ptr<Buffer>>& buffers() const { return buffers_; }

    Parameter* find_parameter(const std::string& name) const;
    Buffer* find_buffer(const std::string& name) const;

    /// Total number of trainable scalars.
    std::size_t scalar_count() const;

    void zero_grad();

private:
    void check_unique(const std::string& name) const;

    std::mt19937_64 rng_;
    std::vector<std::unique_ptr<Parameter>> parameters_;
    std::vector<std::unique_ptr<Buffer>> buffers_;
};

class Conv2d {
public:
    Conv2d() = default;
    /// Weights uniform in +-sqrt(6 / fan_in), bias zero.
    Conv2d(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
           std::size_t kernel, std::size_t stride = 1, std::size_t pad = 0, bool with_bias = true);

    Tensor operator()(const Tensor& x) const;

    Parameter* weight() const { return weight_; }
    Parameter* bias() const { return bias_; }
    std::size_t in_channels() const;
    std::size_t out_channels() const;

private:
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
    std::size_t stride_ = 1;
    std::size_t pad_ = 0;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(ParameterStore& store, const std::string& name, std::size_t channels);

    Tensor operator()(const Tensor& x, bool training) const;

    Parameter* gamma() const { return gamma_; }
    Parameter* beta() const { return beta_; }

private:
    Parameter* gamma_ = nullptr;
    Parameter* beta_ = nullptr;
    Buffer* running_mean_ = nullptr;
    Buffer* running_var_ = nullptr;
};

/// y = x W^T + b on [N, in] rows.
class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, std::size_t in_features, std::size_t out_features);

    Tensor operator()(const Tensor& x) const;

private:
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
};

/// conv -> batch norm -> ReLU.
class ConvBnRelu {
public:
    ConvBnRelu() = default;
    ConvBnRelu(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel);

    Tensor operator()(const Tensor& x, bool training) const;

private:
    Conv2d conv_;
    BatchNorm2d bn_;
};

struct SgdOptions {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

/// v <- momentum*v + grad + weight_decay*w;  w <- w - lr*v;  grads cleared.
/// Throws ContractError naming the first parameter without a gradient.
void sgd_step(const std::vector<std::unique_ptr<Parameter>>& params, const SgdOptions& options);
void sgd_step(const std::vector<Parameter*>& params, const SgdOptions& options);

}  // namespace m2r
