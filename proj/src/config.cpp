#include "axlab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

namespace axlab {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::train_lm: return "train-lm";
    case Mode::train_cls: return "train-cls";
    case Mode::pdmm: return "pdmm";
  }
  return "train-lm";
}

std::optional<Mode> parse_mode(std::string_view text) {
  for (Mode m : {Mode::train_lm, Mode::train_cls, Mode::pdmm})
    if (text == to_string(m)) return m;
  return std::nullopt;
}

std::string_view to_string(CorpusKind k) { return k == CorpusKind::copy_task ? "copy-task" : "markov-chars"; }

std::optional<CorpusKind> parse_corpus_kind(std::string_view text) {
  if (text == "copy-task") return CorpusKind::copy_task;
  if (text == "markov-chars") return CorpusKind::markov_chars;
  return std::nullopt;
}

MaskMode ExperimentConfig::effective_mask() const {
  if (mask) return *mask;
  if (mode == Mode::train_lm) return MaskMode::causal;
  return variant == Variant::attentionx ? MaskMode::zero_diagonal : MaskMode::none;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.task = mode == Mode::train_cls ? Task::classifier : Task::language_model;
  m.n_layers = n_layers;
  m.d_model = d_model;
  m.heads = heads;
  m.d_ff = d_ff;
  m.vocab_size = vocab;
  m.variant = variant;
  m.gamma = gamma;
  m.mask = effective_mask();
  m.seed = seed;
  if (mode == Mode::train_cls) {
    if (dataset == Dataset::cifar) {
      m.patch_dim = patch_size * patch_size * 3;
      m.max_seq_len = (32 / patch_size) * (32 / patch_size);
      m.n_classes = 10;
    } else {
      m.patch_dim = patch_dim;
      m.max_seq_len = n_patches;
      m.n_classes = n_classes;
    }
  } else {
    m.max_seq_len = seq_len;
  }
  return m;
}

AdamConfig ExperimentConfig::adam_config() const { return {learning_rate, beta1, beta2, adam_eps}; }

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::size_t)>;

[[noreturn]] void bad_value(std::size_t line, std::string_view key, std::string_view value, const char* expected) {
  throw ParseError(line, "invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                             expected + ")");
}

template <typename T>
Setter count_field(T ExperimentConfig::*field, const char* key) {
  return [field, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(line, key, v, "a non-negative integer");
    c.*field = out;
  };
}

Setter real_field(double ExperimentConfig::*field, const char* key) {
  return [field, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
    const std::string s(v);
    char* end = nullptr;
    const double out = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out)) bad_value(line, key, v, "a real number");
    c.*field = out;
  };
}

Setter bool_field(bool ExperimentConfig::*field, const char* key) {
  return [field, key](ExperimentConfig& c, std::string_view v, std::size_t line) {
    if (v == "true" || v == "1") c.*field = true;
    else if (v == "false" || v == "0") c.*field = false;
    else bad_value(line, key, v, "true or false");
  };
}

Setter string_field(std::string ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, std::string_view v, std::size_t) { c.*field = std::string(v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  using C = ExperimentConfig;
  static const std::map<std::string, Setter, std::less<>> table = {
      {"mode",
       [](C& c, std::string_view v, std::size_t line) {
         auto m = parse_mode(v);
         if (!m) bad_value(line, "mode", v, "train-lm, train-cls or pdmm");
         c.mode = *m;
       }},
      {"seed", count_field(&C::seed, "seed")},
      {"steps", count_field(&C::steps, "steps")},
      {"repeats", count_field(&C::repeats, "repeats")},
      {"timing", bool_field(&C::timing, "timing")},
      {"out", string_field(&C::out)},
      {"variant",
       [](C& c, std::string_view v, std::size_t line) {
         auto m = parse_variant(v);
         if (!m) bad_value(line, "variant", v, "standard or attentionx");
         c.variant = *m;
       }},
      {"gamma", real_field(&C::gamma, "gamma")},
      {"mask",
       [](C& c, std::string_view v, std::size_t line) {
         if (v == "auto") {
           c.mask.reset();
           return;
         }
         auto m = parse_mask_mode(v);
         if (!m) bad_value(line, "mask", v, "auto, none, causal, zero_diagonal or causal_zero_diagonal");
         c.mask = *m;
       }},
      {"n_layers", count_field(&C::n_layers, "n_layers")},
      {"d_model", count_field(&C::d_model, "d_model")},
      {"heads", count_field(&C::heads, "heads")},
      {"d_ff", count_field(&C::d_ff, "d_ff")},
      {"learning_rate", real_field(&C::learning_rate, "learning_rate")},
      {"beta1", real_field(&C::beta1, "beta1")},
      {"beta2", real_field(&C::beta2, "beta2")},
      {"adam_eps", real_field(&C::adam_eps, "adam_eps")},
      {"batch_size", count_field(&C::batch_size, "batch_size")},
      {"eval_every", count_field(&C::eval_every, "eval_every")},
      {"corpus",
       [](C& c, std::string_view v, std::size_t line) {
         auto k = parse_corpus_kind(v);
         if (!k) bad_value(line, "corpus", v, "copy-task or markov-chars");
         c.corpus = *k;
       }},
      {"vocab", count_field(&C::vocab, "vocab")},
      {"corpus_length", count_field(&C::corpus_length, "corpus_length")},
      {"period", count_field(&C::period, "period")},
      {"seq_len", count_field(&C::seq_len, "seq_len")},
      {"val_fraction", real_field(&C::val_fraction, "val_fraction")},
      {"dataset",
       [](C& c, std::string_view v, std::size_t line) {
         if (v == "synthetic") c.dataset = Dataset::synthetic;
         else if (v == "cifar") c.dataset = Dataset::cifar;
         else bad_value(line, "dataset", v, "synthetic or cifar");
       }},
      {"cifar_train", string_field(&C::cifar_train)},
      {"cifar_val", string_field(&C::cifar_val)},
      {"patch_size", count_field(&C::patch_size, "patch_size")},
      {"n_classes", count_field(&C::n_classes, "n_classes")},
      {"n_patches", count_field(&C::n_patches, "n_patches")},
      {"patch_dim", count_field(&C::patch_dim, "patch_dim")},
      {"train_examples", count_field(&C::train_examples, "train_examples")},
      {"val_examples", count_field(&C::val_examples, "val_examples")},
      {"problem", string_field(&C::problem)},
      {"rho", real_field(&C::rho, "rho")},
      {"iterations", count_field(&C::iterations, "iterations")},
      {"async", bool_field(&C::async, "async")},
      {"residual_cap", count_field(&C::residual_cap, "residual_cap")},
  };
  return table;
}

void check_ranges(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw ParseError(0, what); };
  if (c.gamma < 0.0) fail("gamma must be >= 0");
  if (c.rho <= 0.0) fail("rho must be > 0");
  if (c.batch_size == 0) fail("batch_size must be positive");
  if (c.seq_len == 0) fail("seq_len must be positive");
  if (c.vocab == 0 || c.vocab > 256) fail("vocab must be in [1, 256]");
  if (c.period == 0) fail("period must be positive");
  if (c.val_fraction <= 0.0 || c.val_fraction >= 1.0) fail("val_fraction must be in (0, 1)");
  if (c.repeats == 0) fail("repeats must be positive");
  if (c.d_model == 0 || c.heads == 0 || c.d_model % c.heads != 0) fail("d_model must be a positive multiple of heads");
  if (c.patch_size == 0 || 32 % c.patch_size != 0) fail("patch_size must divide 32");
  if (c.learning_rate < 0.0) fail("learning_rate must be >= 0");
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::optional<Mode> mode_override) {
  ExperimentConfig cfg;
  bool have_mode = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = setters();
    auto it = table.find(key);
    if (it == table.end()) throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
    if (value.empty()) throw ParseError(line_no, "missing value for " + std::string(key));
    it->second(cfg, value, line_no);
    if (key == "mode") have_mode = true;
  }
  if (mode_override) {
    cfg.mode = *mode_override;
    have_mode = true;
  }
  if (!have_mode) throw ParseError(0, "no mode given (set 'mode' or pass it on the command line)");
  check_ranges(cfg);
  return cfg;
}

}  // namespace axlab
