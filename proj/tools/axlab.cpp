// axlab <mode> --config <file> [--seed N] [--out <path>] [--variant standard|attentionx] [--gamma F]
//
// Exit codes: 0 success, 1 usage/config error, 2 divergence, 3 I/O failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "axlab/config.hpp"
#include "axlab/experiment.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kDivergence = 2;
constexpr int kIoError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AttentionX / PDMM numerical lab"};
  std::string mode_text;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant_text;
  std::optional<double> gamma;
  app.add_option("mode", mode_text, "train-lm, train-cls or pdmm")->required();
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", out, "CSV output path");
  app.add_option("--variant", variant_text, "standard or attentionx");
  app.add_option("--gamma", gamma, "AttentionX scaling (>= 0)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  axlab::ExperimentConfig cfg;
  try {
    const auto mode = axlab::parse_mode(mode_text);
    if (!mode) {
      std::cerr << "axlab: unknown mode '" << mode_text << "' (expected train-lm, train-cls or pdmm)\n";
      return kUsageError;
    }
    std::string text;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "axlab: cannot read config " << config_path << "\n";
        return kUsageError;
      }
      std::ostringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    cfg = axlab::parse_config(text, mode);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (variant_text) {
      const auto v = axlab::parse_variant(*variant_text);
      if (!v) {
        std::cerr << "axlab: unknown variant '" << *variant_text << "'\n";
        return kUsageError;
      }
      cfg.variant = *v;
    }
    if (gamma) {
      if (!(*gamma >= 0.0)) {
        std::cerr << "axlab: gamma must be >= 0\n";
        return kUsageError;
      }
      cfg.gamma = *gamma;
    }
  } catch (const axlab::ParseError& e) {
    std::cerr << "axlab: config error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    axlab::run_sweep(cfg, axlab::sweep_threads_from_env());
  } catch (const axlab::DivergenceError& e) {
    std::cerr << "axlab: " << e.what() << "\n";
    return kDivergence;
  } catch (const axlab::IoError& e) {
    std::cerr << "axlab: I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const axlab::FormatError& e) {
    std::cerr << "axlab: input format error: " << e.what() << "\n";
    return kIoError;
  } catch (const axlab::ParseError& e) {
    std::cerr << "axlab: input error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "axlab: " << e.what() << "\n";
    return kUsageError;
  }
  return 0;
}
