#pragma once

// Dense feed-forward networks with explicit reverse-mode gradients and an
// Adam optimizer. Samples are stored column-wise: an input batch is
// (input_size x batch).

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "safeslice/errors.hpp"
#include "safeslice/rng.hpp"

namespace safeslice::nn {

enum class Activation { Tanh, Relu, Linear, Softmax };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Linear: return "linear";
    case Activation::Softmax: return "softmax";
  }
  return "linear";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "linear") return Activation::Linear;
  if (s == "softmax") return Activation::Softmax;
  throw ParseError("unknown activation '" + s + "'");
}

/// Column-wise softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out =
      (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

/// Column-wise log-softmax.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> shifted = logits.rowwise() - logits.colwise().maxCoeff();
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> lse = shifted.array().exp().colwise().sum().log().matrix();
  shifted.rowwise() -= lse;
  return shifted;
}

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
  };
  using Gradients = std::vector<Layer>;

  /// Post-activation outputs of every layer; `values[0]` is the input.
  struct Cache {
    std::vector<Matrix> values;
  };

  Mlp() = default;

  /// Xavier-uniform weights, zero biases.
  Mlp(const std::vector<int>& sizes, Activation hidden, Activation output, Rng& rng)
      : hidden_(hidden), output_(output) {
    if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
    if (hidden == Activation::Softmax) throw ShapeError("softmax is only supported on the output layer");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const int in = sizes[i];
      const int out = sizes[i + 1];
      if (in < 1 || out < 1) throw ShapeError("layer sizes must be positive");
      const double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      Layer layer{Matrix(out, in), Vector::Zero(out)};
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = Scalar(dist(rng));
      layers_.push_back(std::move(layer));
    }
  }

  Eigen::Index input_size() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
  Eigen::Index output_size() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Matrix forward(const Eigen::Ref<const Matrix>& input, Cache* cache = nullptr) const {
    if (input.rows() != input_size()) {
      throw ShapeError("input has " + std::to_string(input.rows()) + " rows, network expects " +
                       std::to_string(input_size()));
    }
    if (cache) {
      cache->values.clear();
      cache->values.push_back(input);
    }
    Matrix x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = layers_[i].weight * x;
      z.colwise() += layers_[i].bias;
      x = activate(z, i + 1 == layers_.size() ? output_ : hidden_);
      if (cache) cache->values.push_back(x);
    }
    return x;
  }

  Vector forward_one(const Eigen::Ref<const Vector>& input) const { return forward(input).col(0); }

  /// Gradients of a scalar loss w.r.t. every parameter given dL/d(output).
  Gradients backward(const Cache& cache, const Eigen::Ref<const Matrix>& output_grad, Matrix* input_grad = nullptr) const {
    if (cache.values.size() != layers_.size() + 1) throw ShapeError("cache does not match this network");
    const Matrix& out = cache.values.back();
    if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
      throw ShapeError("output gradient shape does not match the forward output");
    }
    Gradients grads(layers_.size());
    Matrix delta = output_grad;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      delta = activation_backward(cache.values[k + 1], delta, k + 1 == layers_.size() ? output_ : hidden_);
      grads[k].weight = delta * cache.values[k].transpose();
      grads[k].bias = delta.rowwise().sum();
      if (k > 0 || input_grad) delta = layers_[k].weight.transpose() * delta;
    }
    if (input_grad) *input_grad = delta;
    return grads;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "safeslice-mlp";
    j["version"] = 1;
    j["hidden"] = to_string(hidden_);
    j["output"] = to_string(output_);
    j["layers"] = nlohmann::json::array();
    for (const auto& l : layers_) {
      nlohmann::json layer;
      layer["rows"] = l.weight.rows();
      layer["cols"] = l.weight.cols();
      std::vector<double> w(static_cast<std::size_t>(l.weight.size()));
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>>(w.data(), l.weight.rows(), l.weight.cols()) =
          l.weight.template cast<double>();
      layer["weight"] = w;
      std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
      layer["bias"] = b;
      j["layers"].push_back(layer);
    }
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "safeslice-mlp" || j.value("version", 0) != 1) {
      throw ParseError("not a version-1 safeslice-mlp document");
    }
    Mlp net;
    net.hidden_ = parse_activation(j.at("hidden").get<std::string>());
    net.output_ = parse_activation(j.at("output").get<std::string>());
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      auto w = layer.at("weight").get<std::vector<double>>();
      auto b = layer.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
        throw ParseError("layer parameter count does not match its shape");
      }
      Layer l;
      l.weight = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>>(w.data(), rows, cols).template cast<Scalar>();
      l.bias = Eigen::Map<Eigen::VectorXd>(b.data(), rows).template cast<Scalar>();
      if (!net.layers_.empty() && net.layers_.back().weight.rows() != cols) {
        throw ParseError("consecutive layer shapes are inconsistent");
      }
      net.layers_.push_back(std::move(l));
    }
    if (net.layers_.empty()) throw ParseError("network has no layers");
    return net;
  }

 private:
  static Matrix activate(const Matrix& z, Activation a) {
    switch (a) {
      case Activation::Tanh: return z.array().tanh().matrix();
      case Activation::Relu: return z.cwiseMax(Scalar(0));
      case Activation::Linear: return z;
      case Activation::Softmax: return softmax(z);
    }
    return z;
  }

  // dL/dz from dL/dy, using the post-activation y.
  static Matrix activation_backward(const Matrix& y, const Matrix& grad, Activation a) {
    switch (a) {
      case Activation::Tanh: return (grad.array() * (Scalar(1) - y.array().square())).matrix();
      case Activation::Relu: return (grad.array() * (y.array() > Scalar(0)).template cast<Scalar>()).matrix();
      case Activation::Linear: return grad;
      case Activation::Softmax: {
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dot = (grad.array() * y.array()).colwise().sum().matrix();
        return (y.array() * (grad.rowwise() - dot).array()).matrix();
      }
    }
    return grad;
  }

  std::vector<Layer> layers_;
  Activation hidden_ = Activation::Tanh;
  Activation output_ = Activation::Linear;
};

/// Adaptive-moment optimizer state for one network.
template <typename Scalar>
class Adam {
 public:
  using Net = Mlp<Scalar>;

  Adam() = default;
  explicit Adam(const Net& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    for (const auto& l : net.layers()) {
      first_.push_back({Net::Matrix::Zero(l.weight.rows(), l.weight.cols()), Net::Vector::Zero(l.bias.size())});
      second_.push_back(first_.back());
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps() const { return steps_; }

  nlohmann::json to_json() const {
    auto moments = [](const typename Net::Gradients& g) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& l : g) {
        std::vector<double> w(l.weight.data(), l.weight.data() + l.weight.size());
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        arr.push_back({{"weight", w}, {"bias", b}});
      }
      return arr;
    };
    return {{"lr", lr_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}, {"steps", steps_},
            {"first", moments(first_)}, {"second", moments(second_)}};
  }

  /// Restores moments saved by to_json(); `net` supplies the shapes.
  static Adam from_json(const nlohmann::json& j, const Net& net) {
    Adam opt(net, j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
             j.at("eps").get<double>());
    opt.steps_ = j.at("steps").get<std::size_t>();
    auto restore = [](const nlohmann::json& arr, typename Net::Gradients& g) {
      if (arr.size() != g.size()) throw ParseError("optimizer state does not match the network");
      for (std::size_t i = 0; i < g.size(); ++i) {
        auto w = arr[i].at("weight").template get<std::vector<double>>();
        auto b = arr[i].at("bias").template get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != g[i].weight.size() ||
            static_cast<Eigen::Index>(b.size()) != g[i].bias.size()) {
          throw ParseError("optimizer moment shape mismatch");
        }
        for (std::size_t k = 0; k < w.size(); ++k) g[i].weight.data()[k] = Scalar(w[k]);
        for (std::size_t k = 0; k < b.size(); ++k) g[i].bias.data()[k] = Scalar(b[k]);
      }
    };
    restore(j.at("first"), opt.first_);
    restore(j.at("second"), opt.second_);
    return opt;
  }

  /// Throws DivergenceError on a non-finite gradient, leaving `net` untouched.
  void step(Net& net, const typename Net::Gradients& grads) {
    if (grads.size() != net.layers().size() || grads.size() != first_.size()) {
      throw ShapeError("gradient list does not match the network");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (grads[i].weight.rows() != net.layers()[i].weight.rows() ||
          grads[i].weight.cols() != net.layers()[i].weight.cols() || grads[i].bias.size() != net.layers()[i].bias.size()) {
        throw ShapeError("gradient shape does not match layer " + std::to_string(i));
      }
      if (!grads[i].weight.allFinite() || !grads[i].bias.allFinite()) {
        throw DivergenceError("non-finite gradient in layer " + std::to_string(i));
      }
    }
    ++steps_;
    const Scalar c1 = Scalar(1.0 - std::pow(beta1_, static_cast<double>(steps_)));
    const Scalar c2 = Scalar(1.0 - std::pow(beta2_, static_cast<double>(steps_)));
    const Scalar b1 = Scalar(beta1_), b2 = Scalar(beta2_), lr = Scalar(lr_), eps = Scalar(eps_);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      };
      auto& layer = net.layers()[i];
      update(layer.weight, grads[i].weight, first_[i].weight, second_[i].weight);
      update(layer.bias, grads[i].bias, first_[i].bias, second_[i].bias);
    }
  }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t steps_ = 0;
  typename Net::Gradients first_;
  typename Net::Gradients second_;
};

/// Polyak averaging: target <- (1 - tau) target + tau source.
template <typename Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& source, double tau) {
  for (std::size_t i = 0; i < target.layers().size(); ++i) {
    auto& t = target.layers()[i];
    const auto& s = source.layers()[i];
    t.weight = Scalar(1 - tau) * t.weight + Scalar(tau) * s.weight;
    t.bias = Scalar(1 - tau) * t.bias + Scalar(tau) * s.bias;
  }
}

}  // namespace safeslice::nn
