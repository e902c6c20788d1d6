#include "axlab/attention.hpp"

#include <cmath>

namespace axlab {

std::string_view to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::none: return "none";
    case MaskMode::causal: return "causal";
    case MaskMode::zero_diagonal: return "zero_diagonal";
    case MaskMode::causal_zero_diagonal: return "causal_zero_diagonal";
  }
  return "none";
}

std::optional<MaskMode> parse_mask_mode(std::string_view text) {
  for (MaskMode m : {MaskMode::none, MaskMode::causal, MaskMode::zero_diagonal, MaskMode::causal_zero_diagonal}) {
    if (text == to_string(m)) return m;
  }
  return std::nullopt;
}

std::optional<Mask> build_mask(MaskMode mode, std::size_t n) {
  if (mode == MaskMode::none) return std::nullopt;
  Mask mask(n, n, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool future = j > i;
      const bool self = j == i;
      switch (mode) {
        case MaskMode::causal: mask.set(i, j, !future); break;
        case MaskMode::zero_diagonal: mask.set(i, j, !self); break;
        case MaskMode::causal_zero_diagonal: mask.set(i, j, i == 0 ? self : j < i); break;
        case MaskMode::none: break;
      }
    }
  }
  return mask;
}

void AttentionParams::validate() const {
  if (heads == 0 || heads * head_dim != d_model) {
    throw DimensionError("attention: heads (" + std::to_string(heads) + ") x head_dim (" + std::to_string(head_dim) +
                         ") must equal d_model (" + std::to_string(d_model) + ")");
  }
  if (head.size() != heads) throw DimensionError("attention: expected " + std::to_string(heads) + " head weight sets");
  for (const auto& w : head) {
    for (const Tensor* t : {&w.query, &w.key, &w.value}) {
      if (t->rows() != d_model || t->cols() != head_dim) {
        throw DimensionError("attention: head projection is " + t->shape_string() + ", expected " +
                             std::to_string(d_model) + "x" + std::to_string(head_dim));
      }
    }
  }
  if (output.rows() != d_model || output.cols() != d_model) {
    throw DimensionError("attention: output projection is " + output.shape_string());
  }
}

namespace {

Tensor normal_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(r, c);
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

std::size_t checked_head_dim(std::size_t heads, std::size_t d_model) {
  if (heads == 0 || d_model % heads != 0) {
    throw DimensionError("attention: d_model " + std::to_string(d_model) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  return d_model / heads;
}

}  // namespace

AttentionParams AttentionParams::random(std::size_t heads, std::size_t d_model, std::mt19937_64& rng,
                                        double stddev) {
  AttentionParams p;
  p.heads = heads;
  p.d_model = d_model;
  p.head_dim = checked_head_dim(heads, d_model);
  for (std::size_t m = 0; m < heads; ++m) {
    HeadWeights w;
    w.query = normal_tensor(d_model, p.head_dim, rng, stddev);
    w.key = normal_tensor(d_model, p.head_dim, rng, stddev);
    w.value = normal_tensor(d_model, p.head_dim, rng, stddev);
    p.head.push_back(std::move(w));
  }
  p.output = normal_tensor(d_model, d_model, rng, stddev);
  return p;
}

AttentionParams AttentionParams::zeros(std::size_t heads, std::size_t d_model) {
  AttentionParams p;
  p.heads = heads;
  p.d_model = d_model;
  p.head_dim = checked_head_dim(heads, d_model);
  for (std::size_t m = 0; m < heads; ++m) {
    p.head.push_back({Tensor(d_model, p.head_dim), Tensor(d_model, p.head_dim), Tensor(d_model, p.head_dim)});
  }
  p.output = Tensor(d_model, d_model);
  return p;
}

std::vector<Tensor> AttentionParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& w : head) {
    out.push_back(w.query);
    out.push_back(w.key);
    out.push_back(w.value);
  }
  out.push_back(output);
  return out;
}

Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t head_dim, MaskMode mask) {
  if (q.rows() != k.rows() || q.cols() != k.cols() || q.cols() != head_dim || head_dim == 0) {
    throw DimensionError("attention_scores: Q " + q.shape_string() + " and K " + k.shape_string() +
                         " must both be n x " + std::to_string(head_dim));
  }
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  if (auto m = build_mask(mask, q.rows())) return softmax_rows(logits, *m);
  return softmax_rows(logits);
}

namespace {

struct Projected {
  Tensor weights;
  Tensor value;
};

Projected project(const Tensor& x, const HeadWeights& w, MaskMode mask) {
  if (x.cols() != w.query.rows()) {
    throw DimensionError("attention: input " + x.shape_string() + " does not match projection " +
                         w.query.shape_string());
  }
  Tensor q = matmul(x, w.query);
  Tensor k = matmul(x, w.key);
  Tensor v = matmul(x, w.value);
  return {attention_scores(q, k, w.query.cols(), mask), v};
}

}  // namespace

Tensor attention_head(const Tensor& x, const HeadWeights& w, MaskMode mask) {
  auto [a, v] = project(x, w, mask);
  return matmul(a, v);
}

Tensor consensus_discrepancy(const Tensor& x, const HeadWeights& w, double gamma, MaskMode mask) {
  if (!(gamma >= 0.0)) throw PreconditionError("consensus_discrepancy: gamma must be >= 0");
  auto [a, v] = project(x, w, mask);
  // Rows of a sum to one, so V - gamma A V = (1 - gamma) V + gamma sum_j a_kj (v_k - v_j).
  return add(scale(v, 1.0 - gamma), scale(weighted_differences(a, v), gamma));
}

Tensor multi_head_standard(const Tensor& x, const AttentionParams& params, MaskMode mask) {
  params.validate();
  std::vector<Tensor> heads;
  heads.reserve(params.heads);
  for (const auto& w : params.head) heads.push_back(attention_head(x, w, mask));
  return matmul(concat_cols(heads), params.output);
}

Tensor multi_head_attentionx(const Tensor& x, const AttentionParams& params, const AttentionXConfig& cfg) {
  params.validate();
  std::vector<Tensor> phis;
  phis.reserve(params.heads);
  for (const auto& w : params.head) phis.push_back(consensus_discrepancy(x, w, cfg.gamma, cfg.mask));
  return matmul(concat_cols(phis), params.output);
}

Tensor value_passthrough(const Tensor& x, const AttentionParams& params) {
  params.validate();
  std::vector<Tensor> values;
  for (const auto& w : params.head) values.push_back(matmul(x, w.value));
  return matmul(concat_cols(values), params.output);
}

DiscrepancyTerms decomposition_check(const Tensor& x, const HeadWeights& w, double gamma, MaskMode mask,
                                     std::size_t k) {
  if (k >= x.rows()) {
    throw IndexError("decomposition_check: row " + std::to_string(k) + " outside sequence of " +
                     std::to_string(x.rows()) + " tokens");
  }
  const HeadWeights frozen{w.query.detach(), w.key.detach(), w.value.detach()};
  auto [a, v] = project(x.detach(), frozen, mask);
  const std::size_t n = x.rows();
  const std::size_t d = v.cols();
  Tensor self_term(1, d);
  Tensor neighbor_term(1, d);
  auto st = self_term.mutable_values();
  auto nt = neighbor_term.mutable_values();
  const double akk = a(k, k);
  for (std::size_t c = 0; c < d; ++c) st[c] = akk * (1.0 - gamma) * v(k, c);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == k) continue;
    const double akj = a(k, j);
    for (std::size_t c = 0; c < d; ++c) nt[c] += akj * (v(k, c) - gamma * v(j, c));
  }
  return {self_term, neighbor_term};
}

}  // namespace axlab
