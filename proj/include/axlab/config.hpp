#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "axlab/attention.hpp"
#include "axlab/transformer.hpp"

namespace axlab {

enum class Mode { train_lm, train_cls, pdmm };

std::string_view to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view text);

enum class CorpusKind { copy_task, markov_chars };

std::string_view to_string(CorpusKind k);
std::optional<CorpusKind> parse_corpus_kind(std::string_view text);

enum class Dataset { synthetic, cifar };

/// Everything a run needs. Every field has a default; see parse_config for the
/// key names (identical to the field names).
struct ExperimentConfig {
  Mode mode = Mode::train_lm;
  std::uint64_t seed = 0;
  std::size_t steps = 1000;
  std::size_t repeats = 1;
  bool timing = false;  // adds a wall_ms column (breaks byte-identical reruns)
  std::string out = "run.csv";

  // model
  Variant variant = Variant::standard;
  double gamma = 1.0;
  std::optional<MaskMode> mask;  // unset: causal for train-lm, none / zero_diagonal for train-cls
  std::size_t n_layers = 2;
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t d_ff = 0;

  // optimiser
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t eval_every = 50;

  // train-lm
  CorpusKind corpus = CorpusKind::copy_task;
  std::size_t vocab = 16;
  std::size_t corpus_length = 100000;
  std::size_t period = 8;
  std::size_t seq_len = 16;
  double val_fraction = 0.1;

  // train-cls
  Dataset dataset = Dataset::synthetic;
  std::string cifar_train;
  std::string cifar_val;
  std::size_t patch_size = 8;  // CIFAR patches are patch_size x patch_size x 3
  std::size_t n_classes = 4;
  std::size_t n_patches = 8;
  std::size_t patch_dim = 8;
  std::size_t train_examples = 512;
  std::size_t val_examples = 128;

  // pdmm
  std::string problem;  // empty: built-in two-node problem
  double rho = 1.0;
  std::size_t iterations = 500;
  bool async = false;
  std::size_t residual_cap = 4096;

  MaskMode effective_mask() const;
  ModelConfig model_config() const;
  AdamConfig adam_config() const;
};

/// Parses `key = value` lines with `#` comments. mode_override (from the
/// command line) takes precedence over a `mode` key; one of them is required.
/// Throws ParseError naming the offending line (0 when no line applies).
ExperimentConfig parse_config(std::string_view text, std::optional<Mode> mode_override = std::nullopt);

}  // namespace axlab
