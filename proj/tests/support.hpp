#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "axlab/attention.hpp"
#include "axlab/pdmm.hpp"
#include "axlab/tensor.hpp"

namespace axlab::testing {

inline Tensor uniform_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(r, c);
  for (double& v : t.mutable_values()) v = d(rng);
  return t;
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline constexpr MaskMode kAllMasks[] = {MaskMode::none, MaskMode::causal, MaskMode::zero_diagonal,
                                         MaskMode::causal_zero_diagonal};

/// Plain triple loop.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows(), b.cols());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      o[i * b.cols() + j] = s;
    }
  return out;
}

/// Row softmax of s where keep(r, c) is false entries get weight 0.
template <class Keep>
Tensor naive_softmax(const Tensor& s, Keep keep) {
  Tensor out(s.rows(), s.cols());
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c)
      if (keep(r, c)) z += std::exp(s(r, c));
    for (std::size_t c = 0; c < s.cols(); ++c) o[r * s.cols() + c] = keep(r, c) ? std::exp(s(r, c)) / z : 0.0;
  }
  return out;
}

inline bool keeps(MaskMode mode, std::size_t r, std::size_t c) {
  switch (mode) {
    case MaskMode::none: return true;
    case MaskMode::causal: return c <= r;
    case MaskMode::zero_diagonal: return c != r;
    case MaskMode::causal_zero_diagonal: return c < r || (r == 0 && c == 0);
  }
  return true;
}

/// Random connected graph: a random spanning tree plus extra edges.
inline pdmm::Graph random_connected_graph(std::size_t n, std::mt19937_64& rng, double extra_prob = 0.3) {
  std::vector<pdmm::Edge> edges;
  std::vector<std::vector<bool>> present(n, std::vector<bool>(n, false));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t parent = order[uniform_size(rng, 0, t - 1)];
    const std::size_t child = order[t];
    edges.push_back({std::min(parent, child), std::max(parent, child)});
    present[parent][child] = present[child][parent] = true;
  }
  std::bernoulli_distribution extra(extra_prob);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!present[i][j] && extra(rng)) edges.push_back({i, j});
  return pdmm::Graph(n, std::move(edges));
}

/// Consensus problem x_i = x_j on every edge with random targets and, when
/// general is set, random positive definite quadratic objectives.
inline pdmm::Problem random_consensus_problem(std::size_t n, std::size_t dim, std::mt19937_64& rng,
                                              bool general = false) {
  pdmm::Problem p;
  p.graph = random_connected_graph(n, rng);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd a(dim);
    for (auto& v : a) v = u(rng);
    if (!general) {
      p.objectives.push_back(pdmm::NodeObjective::centered(a));
      continue;
    }
    Eigen::MatrixXd m(dim, dim);
    for (auto& v : m.reshaped()) v = 0.5 * u(rng) / 5.0;
    pdmm::QuadraticObjective q{m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(dim, dim), a};
    p.objectives.push_back(pdmm::NodeObjective::quadratic(q));
  }
  for (std::size_t e = 0; e < p.graph.edges().size(); ++e) {
    p.constraints.push_back({Eigen::MatrixXd::Identity(dim, dim), -Eigen::MatrixXd::Identity(dim, dim),
                             Eigen::VectorXd::Zero(dim)});
  }
  return p;
}

}  // namespace axlab::testing
