#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "axlab/data.hpp"
#include "axlab/errors.hpp"
#include "axlab/transformer.hpp"
#include "gradcheck.hpp"
#include "model_gradcheck.hpp"
#include "support.hpp"

using namespace axlab;
using axlab::testing::uniform_tensor;

namespace {

ModelConfig small_lm(Variant variant = Variant::standard) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.vocab_size = 8;
  cfg.max_seq_len = 8;
  cfg.variant = variant;
  cfg.gamma = variant == Variant::attentionx ? 3.0 : 1.0;
  cfg.seed = 5;
  return cfg;
}

TokenBatch fixed_batch() {
  TokenBatch b;
  b.inputs = {{1, 2, 3, 4, 5, 6}, {7, 0, 7, 0, 2, 2}};
  b.targets = {{2, 3, 4, 5, 6, 7}, {0, 7, 0, 2, 2, 1}};
  return b;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("axlab_transformer_" + name);
}

}  // namespace

TEST(Block, ZeroWeightsArePassthrough) {
  std::mt19937_64 rng(1);
  const Tensor x = uniform_tensor(5, 8, rng);
  const BlockParams p = BlockParams::zeros(8, 2, 32);
  for (Variant v : {Variant::standard, Variant::attentionx}) {
    const Tensor y = block_forward(x, p, {v, 3.0, MaskMode::causal});
    EXPECT_LT(max_abs_diff(x, y), 1e-12);
  }
}

TEST(Block, OutputShapeMatchesInput) {
  std::mt19937_64 rng(2);
  const BlockParams p = BlockParams::random(12, 3, 20, rng);
  const Tensor y = block_forward(uniform_tensor(7, 12, rng), p, {Variant::attentionx, 1.0, MaskMode::zero_diagonal});
  EXPECT_EQ(y.rows(), 7u);
  EXPECT_EQ(y.cols(), 12u);
}

TEST(Block, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (Variant v : {Variant::standard, Variant::attentionx}) {
    const BlockParams base = BlockParams::random(4, 2, 6, rng, 0.5);
    std::vector<Tensor> inputs{uniform_tensor(3, 4, rng)};
    for (const Tensor& t : base.tensors()) inputs.push_back(t.detach());
    const auto build = [&](const std::vector<Tensor>& in) {
      BlockParams p;
      p.attention.heads = 2;
      p.attention.d_model = 4;
      p.attention.head_dim = 2;
      for (std::size_t h = 0; h < 2; ++h) p.attention.head.push_back({in[1 + 3 * h], in[2 + 3 * h], in[3 + 3 * h]});
      p.attention.output = in[7];
      p.ln1_gain = in[8];
      p.ln1_bias = in[9];
      p.ln2_gain = in[10];
      p.ln2_bias = in[11];
      p.ffn_w1 = in[12];
      p.ffn_b1 = in[13];
      p.ffn_w2 = in[14];
      p.ffn_b2 = in[15];
      return block_forward(in[0], p, {v, 3.0, MaskMode::causal});
    };
    ASSERT_EQ(inputs.size(), 16u);
    EXPECT_LT(axlab::testing::gradient_error(build, inputs, rng), 1e-4);
  }
}

TEST(Model, ZeroLayersProjectsEmbeddings) {
  ModelConfig cfg = small_lm();
  cfg.n_layers = 0;
  const Model m(cfg);
  const std::vector<int> tokens{3, 1, 4};
  const Tensor h = add(gather_rows(m.input_embedding(), tokens), slice_rows(m.position_embedding(), 0, 3));
  const Tensor expected = matmul(layer_norm(h, m.final_gain(), m.final_bias()), m.head());
  EXPECT_LT(max_abs_diff(m.forward_tokens(tokens), expected), 1e-14);
}

TEST(Model, SameSeedSameLogits) {
  const std::vector<int> tokens{0, 5, 2, 7};
  const Model a(small_lm(Variant::attentionx));
  const Model b(small_lm(Variant::attentionx));
  EXPECT_EQ(max_abs_diff(a.forward_tokens(tokens), b.forward_tokens(tokens)), 0.0);
  EXPECT_EQ(max_abs_diff(a.forward_tokens(tokens), a.forward_tokens(tokens)), 0.0);
}

TEST(Model, OverlongSequenceRejected) {
  const Model m(small_lm());
  const std::vector<int> tokens(9, 1);
  EXPECT_THROW(m.forward_tokens(tokens), IndexError);
}

TEST(Model, ConfigValidation) {
  ModelConfig cfg = small_lm();
  cfg.heads = 3;
  EXPECT_THROW(Model{cfg}, DimensionError);
  cfg = small_lm();
  cfg.gamma = -1.0;
  EXPECT_THROW(Model{cfg}, PreconditionError);
}

TEST(Model, BothVariantsShareParameterLayout) {
  EXPECT_EQ(Model(small_lm(Variant::standard)).parameter_count(), Model(small_lm(Variant::attentionx)).parameter_count());
}

TEST(Model, GammaZeroMatchesValuePassthroughModel) {
  ModelConfig cfg = small_lm(Variant::attentionx);
  cfg.gamma = 0.0;
  const Model m(cfg);
  const std::vector<int> tokens{1, 6, 6, 0, 3};
  Tensor h = add(gather_rows(m.input_embedding(), tokens), slice_rows(m.position_embedding(), 0, tokens.size()));
  for (const BlockParams& b : m.blocks()) {
    const Tensor y = add(h, value_passthrough(layer_norm(h, b.ln1_gain, b.ln1_bias), b.attention));
    const Tensor hidden = gelu(add_row(matmul(layer_norm(y, b.ln2_gain, b.ln2_bias), b.ffn_w1), b.ffn_b1));
    h = add(y, add_row(matmul(hidden, b.ffn_w2), b.ffn_b2));
  }
  const Tensor expected = matmul(layer_norm(h, m.final_gain(), m.final_bias()), m.head());
  EXPECT_LT(max_abs_diff(m.forward_tokens(tokens), expected), 1e-12);
}

TEST(Model, ClassifierForward) {
  ModelConfig cfg;
  cfg.task = Task::classifier;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.patch_dim = 5;
  cfg.n_classes = 3;
  cfg.mask = MaskMode::zero_diagonal;
  cfg.variant = Variant::attentionx;
  const Model m(cfg);
  std::mt19937_64 rng(4);
  const Tensor logits = m.forward_patches(uniform_tensor(6, 5, rng));
  EXPECT_EQ(logits.rows(), 1u);
  EXPECT_EQ(logits.cols(), 3u);
  const std::vector<int> tokens{1};
  EXPECT_THROW(m.forward_tokens(tokens), PreconditionError);
}

TEST(ModelGradient, TinyModelMatchesFiniteDifferences) {
  const std::vector<int> tokens{0, 3, 1, 4};
  const std::vector<int> targets{3, 1, 4, 2};
  for (Variant v : {Variant::standard, Variant::attentionx}) {
    Model m = axlab::testing::tiny_model(v, 3.0, MaskMode::causal, 7);
    EXPECT_LT(axlab::testing::model_gradient_error(m, tokens, targets), 1e-3);
  }
}

TEST(Adam, OneStepMatchesHandComputation) {
  Tape tape;
  const Tensor x = tape.watch(Tensor::from_rows({{1.0, -2.0, 0.5}}));
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  Adam adam({x}, cfg);
  // loss = 1/2 |x|^2, gradient x
  tape.backward(scale(sum(mul(x, x)), 0.5));
  const std::vector<double> before(x.values().begin(), x.values().end());
  adam.step();
  for (std::size_t j = 0; j < 3; ++j) {
    const double g = before[j];
    const double m = (1.0 - cfg.beta1) * g;
    const double v = (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / (1.0 - cfg.beta1);
    const double v_hat = v / (1.0 - cfg.beta2);
    const double expected = before[j] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    EXPECT_NEAR(x(0, j), expected, 1e-15);
    EXPECT_NEAR(adam.first_moment(0)[j], m, 1e-15);
    EXPECT_NEAR(adam.second_moment(0)[j], v, 1e-15);
  }
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  Trainer t(small_lm(), {0.0});
  std::vector<std::vector<double>> before;
  for (const auto& p : t.model().parameters()) before.emplace_back(p.values().begin(), p.values().end());
  const double l1 = t.train_step(fixed_batch());
  const double l2 = t.train_step(fixed_batch());
  EXPECT_EQ(l1, l2);
  const auto params = t.model().parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_TRUE(std::equal(before[i].begin(), before[i].end(), params[i].values().begin()));
}

TEST(Trainer, OverfitsSingleBatch) {
  for (Variant v : {Variant::standard, Variant::attentionx}) {
    Trainer t(small_lm(v), {1e-2});
    double loss = 0.0;
    for (int s = 0; s < 200; ++s) loss = t.train_step(fixed_batch());
    EXPECT_LT(t.evaluate_loss(fixed_batch()), 0.05) << to_string(v) << " last step loss " << loss;
  }
}

TEST(Trainer, CopyTaskBeatsUniformGuessing) {
  const std::size_t vocab = 16;
  const auto corpus = generate_synthetic_corpus(CorpusKind::copy_task, 3, 20000, {vocab, 8});
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.max_seq_len = 16;
  cfg.seed = 3;
  Trainer t(cfg, {});
  std::mt19937_64 rng(3);
  double loss = 0.0;
  for (int s = 0; s < 500; ++s) loss = t.train_step(sample_token_batch(corpus, 8, 16, rng));
  EXPECT_LT(loss, std::log(static_cast<double>(vocab)));
}

TEST(Trainer, SameSeedSameLossCurve) {
  const auto run = [] {
    Trainer t(small_lm(Variant::attentionx), {3e-3});
    std::vector<double> losses;
    for (int s = 0; s < 20; ++s) losses.push_back(t.train_step(fixed_batch()));
    return losses;
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, NonFiniteLossIsDivergence) {
  Trainer t(small_lm(), {});
  Tensor emb = t.model().input_embedding();
  emb.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.train_step(fixed_batch());
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(Checkpoint, RoundTrip) {
  Trainer t(small_lm(Variant::attentionx), {1e-2});
  for (int s = 0; s < 3; ++s) t.train_step(fixed_batch());
  const auto path = temp_path("roundtrip.axl");
  save_checkpoint(path, t.model());
  const Model loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config().variant, Variant::attentionx);
  EXPECT_EQ(loaded.config().gamma, 3.0);
  EXPECT_EQ(loaded.config().mask, MaskMode::causal);
  const auto a = t.model().parameters();
  const auto b = loaded.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(max_abs_diff(a[i], b[i]), 0.0);
  const std::vector<int> tokens{1, 2, 3};
  EXPECT_EQ(max_abs_diff(t.model().forward_tokens(tokens), loaded.forward_tokens(tokens)), 0.0);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto path = temp_path("corrupt.axl");
  save_checkpoint(path, Model(small_lm()));
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  EXPECT_THROW(load_checkpoint(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOPE and some more bytes to fill the header";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
