#pragma once

// Pre-norm Attention-FFN blocks, small GPT-style and ViT-style models, and an
// Adam training loop over them.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "axlab/attention.hpp"
#include "axlab/tensor.hpp"

namespace axlab {

enum class Variant { standard, attentionx };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view text);

/// Token sequences in, per-position vocabulary logits out; or patch features
/// in, one pooled row of class logits out.
enum class Task { language_model, classifier };

struct ModelConfig {
  Task task = Task::language_model;
  std::size_t n_layers = 2;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model
  std::size_t vocab_size = 16;
  std::size_t patch_dim = 0;
  std::size_t n_classes = 0;
  std::size_t max_seq_len = 32;
  Variant variant = Variant::standard;
  double gamma = 1.0;  // ignored by the standard variant
  MaskMode mask = MaskMode::causal;
  std::uint64_t seed = 0;

  std::size_t ffn_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }
  std::size_t output_dim() const { return task == Task::language_model ? vocab_size : n_classes; }
  void validate() const;
};

struct BlockParams {
  AttentionParams attention;
  Tensor ln1_gain, ln1_bias;
  Tensor ln2_gain, ln2_bias;
  Tensor ffn_w1, ffn_b1;  // d_model x d_ff, 1 x d_ff
  Tensor ffn_w2, ffn_b2;  // d_ff x d_model, 1 x d_model

  static BlockParams random(std::size_t d_model, std::size_t heads, std::size_t d_ff, std::mt19937_64& rng,
                            double stddev = 0.02);
  /// Unit layer-norm gains, everything else zero.
  static BlockParams zeros(std::size_t d_model, std::size_t heads, std::size_t d_ff);

  std::vector<Tensor> tensors() const;
};

struct BlockConfig {
  Variant variant = Variant::standard;
  double gamma = 1.0;
  MaskMode mask = MaskMode::none;
};

/// Y = X + MultiHead(LN1(X)); out = Y + FFN(LN2(Y)), FFN(z) = GELU(z W1 + b1) W2 + b2.
Tensor block_forward(const Tensor& x, const BlockParams& params, const BlockConfig& cfg);

class Model {
 public:
  /// Parameters drawn from Normal(0, 0.02) seeded by cfg.seed; layer-norm gains 1, biases 0.
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  BlockConfig block_config() const { return {cfg_.variant, cfg_.gamma, cfg_.mask}; }

  /// n x vocab_size logits for a language model.
  Tensor forward_tokens(std::span<const int> tokens) const;
  /// 1 x n_classes logits for a classifier; patches is n x patch_dim.
  Tensor forward_patches(const Tensor& patches) const;

  /// Every parameter in declaration order (the checkpoint order).
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  const std::vector<BlockParams>& blocks() const { return blocks_; }
  const Tensor& input_embedding() const { return input_embedding_; }
  const Tensor& input_bias() const { return input_bias_; }
  const Tensor& position_embedding() const { return position_embedding_; }
  const Tensor& final_gain() const { return final_gain_; }
  const Tensor& final_bias() const { return final_bias_; }
  const Tensor& head() const { return head_; }

 private:
  Tensor encode(Tensor embedded) const;

  ModelConfig cfg_;
  Tensor input_embedding_;  // vocab x d_model (tokens) or patch_dim x d_model (patches)
  Tensor input_bias_;       // 1 x d_model, classifier only (0x0 otherwise)
  Tensor position_embedding_;
  std::vector<BlockParams> blocks_;
  Tensor final_gain_, final_bias_;
  Tensor head_;  // d_model x output_dim
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. Reads each parameter's
/// gradient buffer and updates its values in place.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  std::span<const double> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

struct TokenBatch {
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
};

struct PatchBatch {
  std::vector<Tensor> patches;
  std::vector<int> labels;
};

/// Model, optimizer and tape for one training run.
class Trainer {
 public:
  Trainer(ModelConfig model_cfg, AdamConfig adam_cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// One Adam update on the batch's mean cross-entropy. Returns the pre-update
  /// loss; throws DivergenceError if it is not finite.
  double train_step(const TokenBatch& batch);
  double train_step(const PatchBatch& batch);

  double evaluate_loss(const TokenBatch& batch);
  double evaluate_loss(const PatchBatch& batch);
  /// Fraction of correctly classified examples.
  double evaluate_accuracy(const PatchBatch& batch);

  const Model& model() const { return *model_; }
  const Adam& optimizer() const { return *adam_; }
  std::size_t step() const { return adam_->steps(); }

 private:
  Tensor batch_loss(const TokenBatch& batch) const;
  Tensor batch_loss(const PatchBatch& batch) const;
  double finish_step(const Tensor& loss);

  std::unique_ptr<Tape> tape_;  // declared first so it outlives the parameters
  std::unique_ptr<Model> model_;
  std::unique_ptr<Adam> adam_;
};

// Checkpoint file: little-endian, magic "AXL1", then
//   u32 task, n_layers, d_model, heads, d_ff, vocab_size, patch_dim, n_classes,
//       max_seq_len, variant, mask
//   u64 seed, f64 gamma, u64 parameter count,
//   f64 parameters in Model::parameters() order.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace axlab
