#include "axlab/transformer.hpp"

#include <cmath>

namespace axlab {

std::string_view to_string(Variant v) { return v == Variant::standard ? "standard" : "attentionx"; }

std::optional<Variant> parse_variant(std::string_view text) {
  if (text == "standard") return Variant::standard;
  if (text == "attentionx") return Variant::attentionx;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw DimensionError("model: d_model " + std::to_string(d_model) + " must be a positive multiple of heads " +
                         std::to_string(heads));
  }
  if (max_seq_len == 0) throw PreconditionError("model: max_seq_len must be positive");
  if (task == Task::language_model && vocab_size == 0) throw PreconditionError("model: vocab_size must be positive");
  if (task == Task::classifier && (patch_dim == 0 || n_classes == 0)) {
    throw PreconditionError("model: classifier needs patch_dim and n_classes");
  }
  if (!(gamma >= 0.0)) throw PreconditionError("model: gamma must be >= 0");
}

namespace {

Tensor normal_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(r, c);
  for (double& v : t.mutable_values()) v = dist(rng);
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

BlockParams BlockParams::random(std::size_t d_model, std::size_t heads, std::size_t d_ff, std::mt19937_64& rng,
                                double stddev) {
  BlockParams p;
  p.attention = AttentionParams::random(heads, d_model, rng, stddev);
  p.ln1_gain = Tensor(1, d_model, 1.0);
  p.ln1_bias = Tensor(1, d_model);
  p.ln2_gain = Tensor(1, d_model, 1.0);
  p.ln2_bias = Tensor(1, d_model);
  p.ffn_w1 = normal_tensor(d_model, d_ff, rng, stddev);
  p.ffn_b1 = Tensor(1, d_ff);
  p.ffn_w2 = normal_tensor(d_ff, d_model, rng, stddev);
  p.ffn_b2 = Tensor(1, d_model);
  return p;
}

BlockParams BlockParams::zeros(std::size_t d_model, std::size_t heads, std::size_t d_ff) {
  BlockParams p;
  p.attention = AttentionParams::zeros(heads, d_model);
  p.ln1_gain = Tensor(1, d_model, 1.0);
  p.ln1_bias = Tensor(1, d_model);
  p.ln2_gain = Tensor(1, d_model, 1.0);
  p.ln2_bias = Tensor(1, d_model);
  p.ffn_w1 = Tensor(d_model, d_ff);
  p.ffn_b1 = Tensor(1, d_ff);
  p.ffn_w2 = Tensor(d_ff, d_model);
  p.ffn_b2 = Tensor(1, d_model);
  return p;
}

std::vector<Tensor> BlockParams::tensors() const {
  std::vector<Tensor> out = attention.tensors();
  for (const Tensor* t : {&ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2}) {
    out.push_back(*t);
  }
  return out;
}

Tensor block_forward(const Tensor& x, const BlockParams& params, const BlockConfig& cfg) {
  const Tensor normed = layer_norm(x, params.ln1_gain, params.ln1_bias);
  const Tensor mixed = cfg.variant == Variant::standard
                           ? multi_head_standard(normed, params.attention, cfg.mask)
                           : multi_head_attentionx(normed, params.attention, {cfg.gamma, cfg.mask});
  const Tensor y = add(x, mixed);
  const Tensor hidden = gelu(add_row(matmul(layer_norm(y, params.ln2_gain, params.ln2_bias), params.ffn_w1),
                                     params.ffn_b1));
  return add(y, add_row(matmul(hidden, params.ffn_w2), params.ffn_b2));
}

// ---- Model ------------------------------------------------------------------

Model::Model(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t d = cfg_.d_model;
  if (cfg_.task == Task::language_model) {
    input_embedding_ = normal_tensor(cfg_.vocab_size, d, rng, kInitStd);
  } else {
    input_embedding_ = normal_tensor(cfg_.patch_dim, d, rng, kInitStd);
    input_bias_ = Tensor(1, d);
  }
  position_embedding_ = normal_tensor(cfg_.max_seq_len, d, rng, kInitStd);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    blocks_.push_back(BlockParams::random(d, cfg_.heads, cfg_.ffn_width(), rng, kInitStd));
  }
  final_gain_ = Tensor(1, d, 1.0);
  final_bias_ = Tensor(1, d);
  head_ = normal_tensor(d, cfg_.output_dim(), rng, kInitStd);
}

Tensor Model::encode(Tensor embedded) const {
  const std::size_t n = embedded.rows();
  if (n == 0) throw PreconditionError("model: empty sequence");
  if (n > cfg_.max_seq_len) {
    throw IndexError("model: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                     std::to_string(cfg_.max_seq_len));
  }
  Tensor h = add(embedded, slice_rows(position_embedding_, 0, n));
  const BlockConfig bc = block_config();
  for (const auto& block : blocks_) h = block_forward(h, block, bc);
  return layer_norm(h, final_gain_, final_bias_);
}

Tensor Model::forward_tokens(std::span<const int> tokens) const {
  if (cfg_.task != Task::language_model) throw PreconditionError("model: forward_tokens on a classifier");
  if (tokens.size() > cfg_.max_seq_len) {
    throw IndexError("model: sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                     std::to_string(cfg_.max_seq_len));
  }
  return matmul(encode(gather_rows(input_embedding_, tokens)), head_);
}

Tensor Model::forward_patches(const Tensor& patches) const {
  if (cfg_.task != Task::classifier) throw PreconditionError("model: forward_patches on a language model");
  if (patches.rows() > cfg_.max_seq_len) {
    throw IndexError("model: sequence length " + std::to_string(patches.rows()) + " exceeds max_seq_len " +
                     std::to_string(cfg_.max_seq_len));
  }
  const Tensor embedded = add_row(matmul(patches, input_embedding_), input_bias_);
  return matmul(mean_rows(encode(embedded)), head_);
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out{input_embedding_};
  if (cfg_.task == Task::classifier) out.push_back(input_bias_);
  out.push_back(position_embedding_);
  for (const auto& b : blocks_) {
    auto t = b.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  out.push_back(final_gain_);
  out.push_back(final_bias_);
  out.push_back(head_);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double correct1 = 1.0 - std::pow(cfg_.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_values();
    auto grad = params_[i].grad();
    if (grad.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correct1;
      const double v_hat = v[j] / correct2;
      values[j] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

// ---- Trainer ----------------------------------------------------------------

Trainer::Trainer(ModelConfig model_cfg, AdamConfig adam_cfg)
    : tape_(std::make_unique<Tape>()), model_(std::make_unique<Model>(model_cfg)) {
  for (const auto& p : model_->parameters()) tape_->watch(p);
  adam_ = std::make_unique<Adam>(model_->parameters(), adam_cfg);
}

Tensor Trainer::batch_loss(const TokenBatch& batch) const {
  if (batch.inputs.empty() || batch.inputs.size() != batch.targets.size()) {
    throw DimensionError("train: token batch needs matching non-empty inputs and targets");
  }
  Tensor total;
  for (std::size_t b = 0; b < batch.inputs.size(); ++b) {
    Tensor l = cross_entropy_logits(model_->forward_tokens(batch.inputs[b]), batch.targets[b]);
    total = b == 0 ? l : add(total, l);
  }
  return scale(total, 1.0 / static_cast<double>(batch.inputs.size()));
}

Tensor Trainer::batch_loss(const PatchBatch& batch) const {
  if (batch.patches.empty() || batch.patches.size() != batch.labels.size()) {
    throw DimensionError("train: patch batch needs matching non-empty patches and labels");
  }
  Tensor total;
  for (std::size_t b = 0; b < batch.patches.size(); ++b) {
    const int label = batch.labels[b];
    Tensor l = cross_entropy_logits(model_->forward_patches(batch.patches[b]), std::span<const int>(&label, 1));
    total = b == 0 ? l : add(total, l);
  }
  return scale(total, 1.0 / static_cast<double>(batch.patches.size()));
}

double Trainer::finish_step(const Tensor& loss) {
  const double value = loss.item();
  if (!std::isfinite(value)) {
    const std::size_t step = adam_->steps();
    tape_->clear();
    throw DivergenceError(step, "training diverged at step " + std::to_string(step) + " (loss is not finite)");
  }
  tape_->backward(loss);
  adam_->step();
  tape_->clear();
  return value;
}

double Trainer::train_step(const TokenBatch& batch) {
  tape_->clear();
  tape_->zero_grad();
  return finish_step(batch_loss(batch));
}

double Trainer::train_step(const PatchBatch& batch) {
  tape_->clear();
  tape_->zero_grad();
  return finish_step(batch_loss(batch));
}

double Trainer::evaluate_loss(const TokenBatch& batch) {
  const double v = batch_loss(batch).item();
  tape_->clear();
  return v;
}

double Trainer::evaluate_loss(const PatchBatch& batch) {
  const double v = batch_loss(batch).item();
  tape_->clear();
  return v;
}

double Trainer::evaluate_accuracy(const PatchBatch& batch) {
  if (batch.patches.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batch.patches.size(); ++b) {
    const Tensor logits = model_->forward_patches(batch.patches[b]);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(0, c) > logits(0, best)) best = c;
    if (static_cast<int>(best) == batch.labels[b]) ++correct;
  }
  tape_->clear();
  return static_cast<double>(correct) / static_cast<double>(batch.patches.size());
}

}  // namespace axlab
