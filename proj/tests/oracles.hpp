#pragma once

// Reference computations the tests compare against. Nothing here calls the
// library's evaluation code: networks are re-evaluated from their raw
// weights in long double and differentiated by central differences.

#include "pinnflow/network.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

using Real = long double;
using Point = std::array<Real, 3>;
using Outputs = std::array<Real, 5>;

inline Outputs forward(const pinnflow::NetworkParams& net, const Point& in) {
  std::vector<Real> a(3);
  for (int k = 0; k < 3; ++k) {
    a[k] = static_cast<Real>(net.inputs.scale[k]) * (in[k] - static_cast<Real>(net.inputs.shift[k]));
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l];
    std::vector<Real> z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      Real s = net.biases[l](i);
      for (Eigen::Index j = 0; j < w.cols(); ++j) s += static_cast<Real>(w(i, j)) * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = (l + 1 < net.weights.size()) ? std::tanh(s) : s;
    }
    a = std::move(z);
  }
  Outputs out{};
  for (int i = 0; i < 5; ++i) out[i] = a[static_cast<std::size_t>(i)];
  return out;
}

inline Point shifted(Point p, int axis, Real h) {
  p[axis] += h;
  return p;
}

/// d outputs / d input[axis] by central differences.
inline Outputs first(const pinnflow::NetworkParams& net, const Point& p, int axis, Real h) {
  const Outputs a = forward(net, shifted(p, axis, h)), b = forward(net, shifted(p, axis, -h));
  Outputs d{};
  for (int i = 0; i < 5; ++i) d[i] = (a[i] - b[i]) / (2 * h);
  return d;
}

/// d^2 outputs / d input[i] d input[j] by central differences.
inline Outputs second(const pinnflow::NetworkParams& net, const Point& p, int i, int j, Real h) {
  Outputs d{};
  if (i == j) {
    const Outputs a = forward(net, shifted(p, i, h)), c = forward(net, p), b = forward(net, shifted(p, i, -h));
    for (int k = 0; k < 5; ++k) d[k] = (a[k] - 2 * c[k] + b[k]) / (h * h);
  } else {
    const Outputs pp = forward(net, shifted(shifted(p, i, h), j, h));
    const Outputs pm = forward(net, shifted(shifted(p, i, h), j, -h));
    const Outputs mp = forward(net, shifted(shifted(p, i, -h), j, h));
    const Outputs mm = forward(net, shifted(shifted(p, i, -h), j, -h));
    for (int k = 0; k < 5; ++k) d[k] = (pp[k] - pm[k] - mp[k] + mm[k]) / (4 * h * h);
  }
  return d;
}

/// |a - b| <= max(rel * |b|, floor).
inline bool close(double a, Real b, double rel, double floor) {
  const Real err = std::fabs(static_cast<Real>(a) - b);
  return err <= std::max<Real>(rel * std::fabs(b), floor);
}

/// Random dense network with non-zero biases and a random input map.
inline pinnflow::NetworkParams random_network(std::mt19937_64& rng, int max_depth, int max_width,
                                              bool random_scaling = true) {
  std::uniform_int_distribution<int> depth(1, max_depth), width(1, max_width);
  std::vector<int> sizes{3};
  const int d = depth(rng);
  for (int k = 0; k < d; ++k) sizes.push_back(width(rng));
  sizes.push_back(5);
  pinnflow::NetworkParams net = pinnflow::init_network(sizes, rng());
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (auto& b : net.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = jitter(rng);
  }
  if (random_scaling) {
    std::uniform_real_distribution<double> sc(0.5, 2.0);
    for (int k = 0; k < 3; ++k) {
      net.inputs.shift[k] = jitter(rng);
      net.inputs.scale[k] = sc(rng);
    }
  }
  return net;
}

}  // namespace oracle
