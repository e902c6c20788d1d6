#pragma once

// Multi-head softmax attention and its consensus-discrepancy variant
// (AttentionX). Every function takes a single unbatched sequence X (n x d_model)
// and is differentiable through the tape of its inputs.

#include <cstddef>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "axlab/tensor.hpp"

namespace axlab {

enum class MaskMode { none, causal, zero_diagonal, causal_zero_diagonal };

std::string_view to_string(MaskMode mode);
std::optional<MaskMode> parse_mask_mode(std::string_view text);

/// Keep-mask for an n-token sequence, or nullopt for MaskMode::none.
///
/// causal removes strictly-upper entries, zero_diagonal removes the diagonal.
/// causal_zero_diagonal removes both except at token 0, which has no earlier
/// token and keeps its self weight.
std::optional<Mask> build_mask(MaskMode mode, std::size_t n);

/// Projections for one head; each is d_model x head_dim.
struct HeadWeights {
  Tensor query;
  Tensor key;
  Tensor value;
};

struct AttentionParams {
  std::size_t heads = 1;
  std::size_t d_model = 0;
  std::size_t head_dim = 0;
  std::vector<HeadWeights> head;  // size == heads
  Tensor output;                  // W^o, d_model x d_model

  /// Throws DimensionError unless heads * head_dim == d_model and all shapes agree.
  void validate() const;

  /// Normal(0, stddev) initialisation.
  static AttentionParams random(std::size_t heads, std::size_t d_model, std::mt19937_64& rng,
                                double stddev = 0.02);
  static AttentionParams zeros(std::size_t heads, std::size_t d_model);

  /// Parameters in declaration order: per head (Q, K, V), then W^o.
  std::vector<Tensor> tensors() const;
};

struct AttentionXConfig {
  double gamma = 1.0;
  MaskMode mask = MaskMode::none;
};

/// softmax(Q K^T / sqrt(head_dim)) with the mask applied before normalisation.
/// Rows sum to one over unmasked entries; masked entries are exactly zero.
Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t head_dim, MaskMode mask);

/// head_m(X) = attention_scores(X W^Q, X W^K) X W^V.
Tensor attention_head(const Tensor& x, const HeadWeights& w, MaskMode mask);

/// Phi_m(X) = V_m - gamma * attention_scores(...) V_m.
Tensor consensus_discrepancy(const Tensor& x, const HeadWeights& w, double gamma, MaskMode mask);

/// Concat(head_1..head_h) W^o.
Tensor multi_head_standard(const Tensor& x, const AttentionParams& params, MaskMode mask);

/// Concat(Phi_1..Phi_h) W^o. Uses exactly the parameters of the standard layer.
Tensor multi_head_attentionx(const Tensor& x, const AttentionParams& params, const AttentionXConfig& cfg);

/// Concat(V_1..V_h) W^o, the gamma = 0 limit of AttentionX.
Tensor value_passthrough(const Tensor& x, const AttentionParams& params);

/// Row k of Phi_m split into the self term alpha_kk (1 - gamma) V[k] and the
/// neighbour term sum_{j != k} alpha_kj (V[k] - gamma V[j]). Both are 1 x head_dim
/// and untracked.
struct DiscrepancyTerms {
  Tensor self_term;
  Tensor neighbor_term;
};

DiscrepancyTerms decomposition_check(const Tensor& x, const HeadWeights& w, double gamma, MaskMode mask,
                                     std::size_t k);

}  // namespace axlab
