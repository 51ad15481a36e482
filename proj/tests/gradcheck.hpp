#pragma once

#include <algorithm>
#include <cmath>

#include "safeslice/neural.hpp"

// Max relative error between backprop and central differences for the loss
// sum(c .* f(x)) over every parameter of `net`.
inline double gradient_check(safeslice::nn::Mlp<double>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& c,
                             double step = 1e-5) {
  using Net = safeslice::nn::Mlp<double>;
  auto loss = [&] { return (net.forward(x).array() * c.array()).sum(); };
  Net::Cache cache;
  net.forward(x, &cache);
  const auto grads = net.backward(cache, c);
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + step;
    const double up = loss();
    param = keep - step;
    const double down = loss();
    param = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    auto& layer = net.layers()[k];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) probe(layer.weight.data()[i], grads[k].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias.data()[i], grads[k].bias.data()[i]);
  }
  return worst;
}
