#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedorch/error.hpp"
#include "fedorch/model/dataset.hpp"
#include "fedorch/model/parameter_vector.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {

enum class ModelKind { linear, mlp };
enum class Activation { relu };

/// Desk-scale regression model: an affine map (linear) or a ReLU MLP with an
/// identity output unit. Output dimension is always 1.
struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  Activation activation = Activation::relu;

  static ModelSpec linear(std::size_t input_dim) {
    return {ModelKind::linear, input_dim, {}, Activation::relu};
  }
  static ModelSpec mlp(std::size_t input_dim, std::vector<std::size_t> hidden) {
    return {ModelKind::mlp, input_dim, std::move(hidden), Activation::relu};
  }

  void validate() const {
    if (input_dim == 0) throw InvalidInput("model input_dim must be positive");
    if (kind == ModelKind::linear && !hidden_dims.empty()) {
      throw InvalidInput("linear model takes no hidden layers");
    }
    if (kind == ModelKind::mlp && hidden_dims.empty()) {
      throw InvalidInput("mlp model needs at least one hidden layer");
    }
    for (auto h : hidden_dims) {
      if (h == 0) throw InvalidInput("hidden layer widths must be positive");
    }
  }

  // Widths from input to output, e.g. {4, 8, 1}.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(1);
    return w;
  }

  bool operator==(const ModelSpec&) const = default;
};

// layer{i}.weight has shape {out, in}; layer{i}.bias has shape {out}.
inline Layout model_layout(const ModelSpec& spec) {
  spec.validate();
  const auto w = spec.widths();
  Layout layout;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    layout.push_back({prefix + ".weight", {w[l + 1], w[l]}});
    layout.push_back({prefix + ".bias", {w[l + 1]}});
  }
  return layout;
}

inline std::size_t parameter_count(const ModelSpec& spec) {
  return layout_size(model_layout(spec));
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn in layout order from
/// Rng(seed); biases are exactly zero.
inline ParameterVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  auto params = ParameterVector::zeros(model_layout(spec));
  Rng rng(seed);
  auto values = params.values();
  std::size_t offset = 0;
  for (const auto& seg : params.layout()) {
    const bool is_weight = seg.shape.size() == 2;
    if (is_weight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(seg.shape[1]));
      for (std::size_t i = 0; i < seg.size(); ++i) {
        values[offset + i] = rng.uniform(-bound, bound);
      }
    }
    offset += seg.size();
  }
  return params;
}

namespace detail {

// Per-sample forward/backward over a flat parameter span. Scratch buffers are
// reused across samples; one instance per thread.
class Network {
 public:
  explicit Network(const ModelSpec& spec)
      : widths_(spec.widths()), acts_(widths_.size()), pre_(widths_.size()) {
    for (std::size_t l = 0; l < widths_.size(); ++l) {
      acts_[l].resize(widths_[l]);
      pre_[l].resize(widths_[l]);
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      weight_offset_.push_back(offset);
      offset += widths_[l] * widths_[l + 1];
      bias_offset_.push_back(offset);
      offset += widths_[l + 1];
    }
    num_params_ = offset;
  }

  std::size_t num_params() const noexcept { return num_params_; }
  std::size_t input_dim() const noexcept { return widths_.front(); }

  double predict(std::span<const double> p, std::span<const double> x) {
    const std::size_t layers = widths_.size() - 1;
    for (std::size_t i = 0; i < x.size(); ++i) acts_[0][i] = x[i];
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      const double* w = p.data() + weight_offset_[l];
      const double* b = p.data() + bias_offset_[l];
      const bool hidden = l + 1 < layers;
      for (std::size_t o = 0; o < out; ++o) {
        double z = 0.0;
        for (std::size_t i = 0; i < in; ++i) z += w[o * in + i] * acts_[l][i];
        z += b[o];
        pre_[l + 1][o] = z;
        acts_[l + 1][o] = hidden ? (z > 0.0 ? z : 0.0) : z;
      }
    }
    return acts_[layers][0];
  }

  // Adds dL/dparams for one sample to grad, where dL/dy_hat = upstream.
  // Must directly follow predict() on the same sample.
  void backward(std::span<const double> p, double upstream,
                std::span<double> grad) {
    const std::size_t layers = widths_.size() - 1;
    delta_.assign(1, upstream);
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      const double* w = p.data() + weight_offset_[l];
      double* gw = grad.data() + weight_offset_[l];
      double* gb = grad.data() + bias_offset_[l];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta_[o];
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += d * acts_[l][i];
        gb[o] += d;
      }
      if (l == 0) break;
      next_delta_.assign(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta_[o];
        for (std::size_t i = 0; i < in; ++i) next_delta_[i] += w[o * in + i] * d;
      }
      // relu'(z) taken as 0 at z == 0
      for (std::size_t i = 0; i < in; ++i) {
        if (!(pre_[l][i] > 0.0)) next_delta_[i] = 0.0;
      }
      delta_.swap(next_delta_);
    }
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<std::vector<double>> acts_;
  std::vector<std::vector<double>> pre_;
  std::vector<double> delta_;
  std::vector<double> next_delta_;
  std::size_t num_params_ = 0;
};

inline void check_params(const ModelSpec& spec, const ParameterVector& params) {
  if (!layouts_compatible(params.layout(), model_layout(spec))) {
    throw InvalidInput("parameter layout does not match model spec (" +
                       std::to_string(params.size()) + " values, expected " +
                       std::to_string(parameter_count(spec)) + ")");
  }
}

// Mean-squared-error gradient over rows[0..m) of data, written into grad
// (overwritten). Throws RunAborted on a non-finite residual.
inline void mse_gradient(Network& net, std::span<const double> params,
                         const Dataset& data,
                         std::span<const std::size_t> rows,
                         std::span<double> grad) {
  for (double& g : grad) g = 0.0;
  const double scale = 2.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    const double residual = net.predict(params, data.row(r)) - data.target(r);
    if (!std::isfinite(residual)) {
      throw RunAborted("non-finite loss during training (row " +
                       std::to_string(r) + ")");
    }
    net.backward(params, scale * residual, grad);
  }
}

}  // namespace detail

inline std::vector<double> forward(const ModelSpec& spec,
                                   const ParameterVector& params,
                                   MatrixView features) {
  detail::check_params(spec, params);
  if (features.cols != spec.input_dim) {
    throw InvalidInput("feature width " + std::to_string(features.cols) +
                       " does not match model input_dim " +
                       std::to_string(spec.input_dim));
  }
  detail::Network net(spec);
  std::vector<double> out;
  out.reserve(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out.push_back(net.predict(params.values(), features.row(i)));
  }
  return out;
}

inline std::vector<double> forward(const ModelSpec& spec,
                                   const ParameterVector& params,
                                   const Dataset& data) {
  return forward(spec, params, data.feature_matrix());
}

/// Exact gradient of (1/m) * sum (y_hat - y)^2 over every row of batch.
inline ParameterVector grad_mse(const ModelSpec& spec,
                                const ParameterVector& params,
                                const Dataset& batch) {
  detail::check_params(spec, params);
  if (batch.empty()) throw InvalidInput("gradient of an empty batch");
  if (batch.cols() != spec.input_dim) {
    throw InvalidInput("batch width does not match model input_dim");
  }
  detail::Network net(spec);
  std::vector<std::size_t> rows(batch.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  auto grad = ParameterVector::zeros(params.layout());
  detail::mse_gradient(net, params.values(), batch, rows, grad.values());
  return grad;
}

/// params - lr * grad. Vanilla SGD: no momentum, no weight decay.
inline ParameterVector sgd_step(const ParameterVector& params,
                                const ParameterVector& grad, double lr) {
  if (params.layout() != grad.layout()) {
    throw InvalidInput("sgd_step: gradient layout differs from parameters");
  }
  ParameterVector out = params;
  auto v = out.values();
  const auto g = grad.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] - lr * g[i];
  return out;
}

}  // namespace fedorch
