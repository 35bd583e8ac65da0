#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "pmesh/error.hpp"

namespace pmesh {

enum class Activation { kIdentity, kSoftplus };

template <typename Scalar>
struct DenseLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::kIdentity;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// log(1 + e^x) and its derivative, the logistic sigmoid.
template <typename Derived>
auto softplus(const Eigen::ArrayBase<Derived>& x) {
  return x.max(typename Derived::Scalar(0)) + (-x.abs()).exp().log1p();
}

template <typename Derived>
auto softplus_grad(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return S(1) / (S(1) + (-x).exp());
}

/// Fully connected network; samples are the columns of the input matrix.
template <typename Scalar>
class Mlp {
 public:
  using Layer = DenseLayer<Scalar>;
  using Matrix = typename Layer::Matrix;
  using Vector = typename Layer::Vector;

  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  std::vector<Layer> layers;

  Mlp() = default;
  explicit Mlp(std::vector<Layer> l) : layers(std::move(l)) { check(); }

  /// Zero parameters with the given widths; every layer but the last is softplus.
  static Mlp zeros(const std::vector<int>& widths) {
    if (widths.size() < 2) throw ConfigError("network needs at least one layer");
    std::vector<Layer> l;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      if (widths[i] <= 0 || widths[i + 1] <= 0) throw ConfigError("layer widths must be positive");
      Layer layer;
      layer.weight = Matrix::Zero(widths[i + 1], widths[i]);
      layer.bias = Vector::Zero(widths[i + 1]);
      layer.activation = i + 2 < widths.size() ? Activation::kSoftplus : Activation::kIdentity;
      l.push_back(std::move(layer));
    }
    return Mlp(std::move(l));
  }

  /// Xavier-uniform weights, zero biases.
  static Mlp xavier(const std::vector<int>& widths, std::uint64_t seed, bool zero_last = false) {
    Mlp m = zeros(widths);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      if (zero_last && i + 1 == m.layers.size()) break;
      auto& w = m.layers[i].weight;
      const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<Scalar>(u(rng));
    }
    return m;
  }

  Eigen::Index input_dim() const { return layers.front().in(); }
  Eigen::Index output_dim() const { return layers.back().out(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  void check() const {
    if (layers.empty()) throw InvariantError("layers", "empty network");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.size() != layers[i].out()) throw InvariantError("layers", "bias size mismatch");
      if (i > 0 && layers[i].in() != layers[i - 1].out())
        throw InvariantError("layers", "layer " + std::to_string(i) + " input does not chain");
      if (!layers[i].weight.allFinite() || !layers[i].bias.allFinite())
        throw InvariantError("layers", "non-finite parameter");
    }
  }

  Matrix forward(const Matrix& x) const {
    Cache unused;
    return forward(x, unused, false);
  }

  Matrix forward(const Matrix& x, Cache& cache, bool keep = true) const {
    if (x.rows() != input_dim()) throw DimensionError("network input has " + std::to_string(x.rows()) +
                                                      " rows, expected " + std::to_string(input_dim()));
    if (keep) {
      cache.inputs.resize(layers.size());
      cache.pre.resize(layers.size());
    }
    Matrix a = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      Matrix z = l.weight * a;
      z.colwise() += l.bias;
      if (keep) {
        cache.inputs[i] = std::move(a);
        cache.pre[i] = z;
      }
      if (l.activation == Activation::kSoftplus)
        a = softplus(z.array()).matrix();
      else
        a = std::move(z);
    }
    return a;
  }

  /// Parameter gradients (same shapes as `layers`) given dL/d(output).
  std::vector<Layer> backward(const Cache& cache, const Matrix& grad_out) const {
    std::vector<Layer> g(layers.size());
    Matrix d = grad_out;
    for (std::size_t k = layers.size(); k-- > 0;) {
      const auto& l = layers[k];
      if (l.activation == Activation::kSoftplus) d.array() *= softplus_grad(cache.pre[k].array());
      g[k].weight.noalias() = d * cache.inputs[k].transpose();
      g[k].bias = d.rowwise().sum();
      g[k].activation = l.activation;
      if (k > 0) d = l.weight.transpose() * d;
    }
    return g;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> m;
    for (const auto& l : layers) {
      DenseLayer<Other> o;
      o.weight = l.weight.template cast<Other>();
      o.bias = l.bias.template cast<Other>();
      o.activation = l.activation;
      m.layers.push_back(std::move(o));
    }
    return m;
  }
};

}  // namespace pmesh
