#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "axlab/config.hpp"
#include "axlab/data.hpp"
#include "axlab/errors.hpp"
#include "axlab/experiment.hpp"

using namespace axlab;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("axlab_lab_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t error_line(std::string_view text, std::optional<Mode> mode = Mode::train_lm) {
  try {
    parse_config(text, mode);
  } catch (const ParseError& e) {
    return e.line();
  }
  return std::numeric_limits<std::size_t>::max();
}

}  // namespace

// ---- config -----------------------------------------------------------------

TEST(Config, EmptyTextWithModeGivesDefaults) {
  const ExperimentConfig c = parse_config("", Mode::pdmm);
  const ExperimentConfig d;
  EXPECT_EQ(c.mode, Mode::pdmm);
  EXPECT_EQ(c.seed, d.seed);
  EXPECT_EQ(c.steps, d.steps);
  EXPECT_EQ(c.gamma, d.gamma);
  EXPECT_EQ(c.learning_rate, d.learning_rate);
  EXPECT_EQ(c.rho, d.rho);
  EXPECT_EQ(c.out, d.out);
  EXPECT_FALSE(c.mask.has_value());
}

TEST(Config, GammaRoundTrips) {
  EXPECT_EQ(parse_config("gamma = 3", Mode::train_lm).gamma, 3.0);
}

TEST(Config, MalformedValueNamesLine) {
  EXPECT_EQ(error_line("gamma = banana"), 1u);
  EXPECT_EQ(error_line("# comment\n\nsteps = 10\nsteps = ten\n"), 4u);
  EXPECT_EQ(error_line("seed = -1"), 1u);
  EXPECT_EQ(error_line("timing = maybe"), 1u);
}

TEST(Config, UnknownKeyAndMissingEquals) {
  EXPECT_EQ(error_line("steps = 5\ncolour = blue\n"), 2u);
  EXPECT_EQ(error_line("steps 5\n"), 1u);
}

TEST(Config, MissingModeRejected) {
  EXPECT_THROW(parse_config("steps = 5", std::nullopt), ParseError);
  EXPECT_EQ(parse_config("mode = train-cls", std::nullopt).mode, Mode::train_cls);
  EXPECT_EQ(parse_config("mode = train-cls", Mode::pdmm).mode, Mode::pdmm);
}

TEST(Config, AllKeysParse) {
  const ExperimentConfig c = parse_config(
      "mode = train-lm   # trailing comment\n"
      "seed = 9\nsteps = 12\nrepeats = 3\ntiming = true\nout = /tmp/x.csv\n"
      "variant = attentionx\ngamma = 3\nmask = causal\nn_layers = 1\nd_model = 16\nheads = 2\nd_ff = 24\n"
      "learning_rate = 0.003\nbeta1 = 0.8\nbeta2 = 0.99\nadam_eps = 1e-9\nbatch_size = 4\neval_every = 5\n"
      "corpus = markov-chars\nvocab = 12\ncorpus_length = 5000\nperiod = 6\nseq_len = 10\nval_fraction = 0.2\n"
      "dataset = synthetic\ncifar_train = a.bin\ncifar_val = b.bin\npatch_size = 4\nn_classes = 3\nn_patches = 5\n"
      "patch_dim = 7\ntrain_examples = 40\nval_examples = 10\n"
      "problem = p.txt\nrho = 0.5\niterations = 30\nasync = false\nresidual_cap = 64\n",
      std::nullopt);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.variant, Variant::attentionx);
  EXPECT_EQ(c.mask, MaskMode::causal);
  EXPECT_EQ(c.corpus, CorpusKind::markov_chars);
  EXPECT_EQ(c.adam_eps, 1e-9);
  EXPECT_EQ(c.residual_cap, 64u);
  EXPECT_TRUE(c.timing);
  EXPECT_EQ(c.out, "/tmp/x.csv");
  const ModelConfig m = c.model_config();
  EXPECT_EQ(m.d_ff, 24u);
  EXPECT_EQ(m.vocab_size, 12u);
  EXPECT_EQ(m.max_seq_len, 10u);
}

TEST(Config, RangeChecks) {
  EXPECT_THROW(parse_config("gamma = -1", Mode::train_lm), ParseError);
  EXPECT_THROW(parse_config("rho = 0", Mode::pdmm), ParseError);
  EXPECT_THROW(parse_config("val_fraction = 1.5", Mode::train_lm), ParseError);
}

TEST(Config, EffectiveMask) {
  ExperimentConfig c;
  c.mode = Mode::train_lm;
  EXPECT_EQ(c.effective_mask(), MaskMode::causal);
  c.mode = Mode::train_cls;
  EXPECT_EQ(c.effective_mask(), MaskMode::none);
  c.variant = Variant::attentionx;
  EXPECT_EQ(c.effective_mask(), MaskMode::zero_diagonal);
  c.mask = MaskMode::causal;
  EXPECT_EQ(c.effective_mask(), MaskMode::causal);
}

// ---- synthetic data ------------------------------------------------------------

TEST(Corpus, SameSeedSameCorpus) {
  for (CorpusKind k : {CorpusKind::copy_task, CorpusKind::markov_chars}) {
    EXPECT_EQ(generate_synthetic_corpus(k, 4, 3000), generate_synthetic_corpus(k, 4, 3000));
    EXPECT_NE(generate_synthetic_corpus(k, 4, 3000), generate_synthetic_corpus(k, 5, 3000));
  }
}

TEST(Corpus, ZeroLengthRejected) {
  EXPECT_THROW(generate_synthetic_corpus(CorpusKind::copy_task, 0, 0), PreconditionError);
}

TEST(CorpusProperty, CopyTaskHasExactPeriod) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t vocab = std::uniform_int_distribution<std::size_t>(2, 64)(rng);
    const std::size_t period = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const std::size_t length = std::uniform_int_distribution<std::size_t>(1, 500)(rng);
    const auto c = generate_synthetic_corpus(CorpusKind::copy_task, rng(), length, {vocab, period});
    ASSERT_EQ(c.size(), length);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_GE(c[i], 0);
      EXPECT_LT(c[i], static_cast<int>(vocab));
      if (i + period < c.size()) EXPECT_EQ(c[i], c[i + period]);
    }
  }
}

TEST(Corpus, CopyTaskPeriodEightAutocorrelation) {
  const auto c = generate_synthetic_corpus(CorpusKind::copy_task, 2, 4000, {16, 8});
  for (std::size_t lag = 1; lag <= 8; ++lag) {
    std::size_t same = 0;
    for (std::size_t i = 0; i + lag < c.size(); ++i) same += c[i] == c[i + lag];
    if (lag == 8) {
      EXPECT_EQ(same, c.size() - lag);
    } else {
      EXPECT_EQ(same, 0u) << "lag " << lag;
    }
  }
}

TEST(Corpus, MarkovBigramRecoversTransitions) {
  const std::size_t vocab = 16;
  const auto truth = markov_transitions(7, vocab);
  const auto c = generate_synthetic_corpus(CorpusKind::markov_chars, 7, 100000, {vocab, 8});
  std::vector<std::vector<double>> counts(vocab, std::vector<double>(vocab, 0.0));
  for (std::size_t i = 0; i + 1 < c.size(); ++i) counts[c[i]][c[i + 1]] += 1.0;
  for (std::size_t a = 0; a < vocab; ++a) {
    double row = 0.0;
    for (double v : counts[a]) row += v;
    if (row == 0.0) continue;
    double tv = 0.0;
    for (std::size_t b = 0; b < vocab; ++b) tv += std::abs(counts[a][b] / row - truth[a][b]);
    EXPECT_LT(0.5 * tv, 0.05) << "row " << a;
  }
}

TEST(Corpus, MarkovRowsAreStochastic) {
  for (const auto& row : markov_transitions(3, 10)) {
    double total = 0.0;
    std::size_t nonzero = 0;
    for (double p : row) {
      total += p;
      nonzero += p > 0.0;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(nonzero, 3u);
  }
}

TEST(Batches, TargetsAreShiftedInputs) {
  const auto c = generate_synthetic_corpus(CorpusKind::markov_chars, 1, 500);
  std::mt19937_64 rng(2);
  const TokenBatch b = sample_token_batch(c, 4, 10, rng);
  ASSERT_EQ(b.inputs.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    ASSERT_EQ(b.inputs[i].size(), 10u);
    for (std::size_t t = 0; t + 1 < 10; ++t) EXPECT_EQ(b.targets[i][t], b.inputs[i][t + 1]);
  }
  const TokenBatch f = fixed_token_batch(c, 16, 10);
  EXPECT_EQ(f.inputs.size(), 16u);
  EXPECT_EQ(f.inputs.front(), std::vector<int>(c.begin(), c.begin() + 10));
}

TEST(PatchData, ShapesAndLabels) {
  const PatchBatch b = generate_patch_dataset(3, 20, 6, 5, 4);
  ASSERT_EQ(b.patches.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(b.patches[i].rows(), 6u);
    EXPECT_EQ(b.patches[i].cols(), 5u);
    EXPECT_GE(b.labels[i], 0);
    EXPECT_LT(b.labels[i], 4);
  }
}

// ---- CIFAR-10 ---------------------------------------------------------------------

TEST(Cifar, ZeroRecord) {
  const std::vector<std::uint8_t> bytes(kCifarRecordBytes, 0);
  const CifarBatch b = parse_cifar10(bytes);
  ASSERT_EQ(b.labels.size(), 1u);
  EXPECT_EQ(b.labels[0], 0);
  for (double v : b.images[0]) EXPECT_EQ(v, 0.0);
}

TEST(Cifar, BadSizeRejected) {
  const std::vector<std::uint8_t> bytes(kCifarImageBytes, 0);
  EXPECT_THROW(parse_cifar10(bytes), FormatError);
}

TEST(Cifar, BadLabelNamesRecord) {
  std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes, 0);
  bytes[kCifarRecordBytes] = 10;
  try {
    parse_cifar10(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
}

TEST(Cifar, WriteReadRoundTrip) {
  std::vector<CifarRecord> records(3);
  for (std::size_t r = 0; r < 3; ++r) {
    records[r].label = static_cast<std::uint8_t>(3 * r + 1);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) records[r].pixels[i] = static_cast<std::uint8_t>((i * 7 + r) % 256);
  }
  const auto path = temp_path("cifar.bin");
  write_cifar10_batch(path, records);
  EXPECT_EQ(std::filesystem::file_size(path), 3 * kCifarRecordBytes);
  const CifarBatch b = load_cifar10_batch(path);
  ASSERT_EQ(b.labels.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(b.labels[r], records[r].label);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) EXPECT_EQ(b.images[r][i], records[r].pixels[i] / 255.0);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_cifar10_batch(path), IoError);
}

TEST(Cifar, PatchLayout) {
  std::vector<double> image(kCifarImageBytes);
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<double>(i);
  const Tensor p = image_to_patches(image, 16);
  ASSERT_EQ(p.rows(), 4u);
  ASSERT_EQ(p.cols(), 16u * 16u * 3u);
  // second patch (top right), green plane, first pixel: channel 1, row 0, column 16
  EXPECT_EQ(p(1, 256), 1024.0 + 16.0);
  // third patch (bottom left), red plane, pixel (1, 2) of the patch: row 17, column 2
  EXPECT_EQ(p(2, 1 * 16 + 2), 17.0 * 32.0 + 2.0);
  EXPECT_THROW(image_to_patches(image, 5), PreconditionError);
}

// ---- CSV ---------------------------------------------------------------------------

TEST(Csv, HeaderPerMode) {
  EXPECT_EQ(csv_columns(Mode::pdmm, false), (std::vector<std::string>{"iteration", "max_residual", "oracle_distance"}));
  EXPECT_EQ(csv_columns(Mode::train_lm, true).back(), "wall_ms");
}

TEST(Csv, StepsMustIncrease) {
  std::ostringstream out;
  CsvWriter w(out, csv_columns(Mode::train_lm, false));
  w.write({1});
  EXPECT_THROW(w.write({1}), PreconditionError);
  std::istringstream bad("step,train_loss\n2,1\n1,1\n");
  EXPECT_THROW(read_csv(bad), FormatError);
}

TEST(CsvProperty, RoundTripIsLossless) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> mag(-300.0, 300.0);
  std::bernoulli_distribution present(0.7);
  const auto value = [&] { return (rng() % 2 ? 1.0 : -1.0) * std::pow(10.0, mag(rng)) * std::uniform_real_distribution<double>(1, 10)(rng); };
  for (int t = 0; t < 100; ++t) {
    for (Mode mode : {Mode::train_lm, Mode::train_cls, Mode::pdmm}) {
      const auto cols = csv_columns(mode, t % 2 == 0);
      std::vector<RunRecord> rows;
      std::int64_t step = 0;
      for (int r = 0; r < 20; ++r) {
        RunRecord rec;
        step += 1 + static_cast<std::int64_t>(rng() % 5);
        rec.step = step;
        for (const auto& c : cols) {
          if (c == "step" || c == "iteration" || !present(rng)) continue;
          const double v = value();
          if (c == "train_loss") rec.train_loss = v;
          if (c == "val_loss") rec.val_loss = v;
          if (c == "val_accuracy") rec.val_accuracy = v;
          if (c == "max_residual") rec.max_residual = v;
          if (c == "oracle_distance") rec.oracle_distance = v;
          if (c == "wall_ms") rec.wall_ms = v;
        }
        rows.push_back(rec);
      }
      std::stringstream buf;
      CsvWriter w(buf, cols);
      for (const auto& r : rows) w.write(r);
      EXPECT_EQ(read_csv(buf), rows);
    }
  }
}

// ---- runs ----------------------------------------------------------------------------

TEST(Run, PdmmBundledProblemConverges) {
  ExperimentConfig c = parse_config("", Mode::pdmm);
  std::stringstream out;
  const RunSummary s = run_experiment(c, out);
  ASSERT_EQ(s.records.size(), c.iterations);
  EXPECT_LT(*s.records.back().max_residual, 1e-8);
  EXPECT_LT(*s.records.back().oracle_distance, 1e-8);
  const auto parsed = read_csv(out);
  EXPECT_EQ(parsed, s.records);
}

TEST(Run, PdmmAsyncConverges) {
  ExperimentConfig c = parse_config("async = true\niterations = 2000", Mode::pdmm);
  std::stringstream out;
  const RunSummary s = run_experiment(c, out);
  EXPECT_LT(*s.records.back().oracle_distance, 1e-6);
}

TEST(Run, ZeroStepsGivesHeaderOnly) {
  std::stringstream out;
  run_experiment(parse_config("steps = 0", Mode::train_lm), out);
  EXPECT_EQ(out.str(), "step,train_loss,val_loss\n");
}

TEST(Run, TrainLmIsByteIdentical) {
  const ExperimentConfig c = parse_config("steps = 15\neval_every = 5\nvariant = attentionx\ngamma = 3", Mode::train_lm);
  std::stringstream a, b;
  run_experiment(c, a);
  run_experiment(c, b);
  EXPECT_EQ(a.str(), b.str());
  const auto rows = read_csv(a);
  ASSERT_EQ(rows.size(), 15u);
  EXPECT_TRUE(rows[4].val_loss.has_value());
  EXPECT_FALSE(rows[5].val_loss.has_value());
  EXPECT_TRUE(rows[14].val_loss.has_value());
}

TEST(Run, TrainClsSynthetic) {
  const ExperimentConfig c =
      parse_config("steps = 150\neval_every = 50\nlearning_rate = 0.003\nvariant = attentionx", Mode::train_cls);
  std::stringstream out;
  const RunSummary s = run_experiment(c, out);
  ASSERT_TRUE(s.records.back().val_accuracy.has_value());
  EXPECT_GT(*s.records.back().val_accuracy, 1.0 / static_cast<double>(c.n_classes));
}

TEST(Run, TrainClsCifarFile) {
  std::vector<CifarRecord> records(12);
  for (std::size_t r = 0; r < records.size(); ++r) {
    records[r].label = static_cast<std::uint8_t>(r % 10);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) records[r].pixels[i] = static_cast<std::uint8_t>((i + 13 * r) % 256);
  }
  const auto path = temp_path("cls.bin");
  write_cifar10_batch(path, records);
  ExperimentConfig c = parse_config("steps = 2\nbatch_size = 2\nd_model = 8\nheads = 2\nn_layers = 1\ndataset = cifar\npatch_size = 16",
                                    Mode::train_cls);
  c.cifar_train = path.string();
  std::stringstream out;
  const RunSummary s = run_experiment(c, out);
  EXPECT_EQ(s.records.size(), 2u);
  std::filesystem::remove(path);
}

TEST(Run, SweepWritesPerSeedFilesAndSummary) {
  const auto dir = temp_path("sweep");
  std::filesystem::create_directories(dir);
  ExperimentConfig c = parse_config("repeats = 3\niterations = 50", Mode::pdmm);
  c.out = (dir / "run.csv").string();
  const auto results = run_sweep(c, 2);
  ASSERT_EQ(results.size(), 3u);
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(std::filesystem::exists(dir / ("run.seed" + std::to_string(s) + ".csv")));
  const std::string summary = slurp(dir / "run.summary.csv");
  EXPECT_EQ(summary.rfind("metric,mean,std,runs\n", 0), 0u);
  EXPECT_NE(summary.find("max_residual,"), std::string::npos);
  EXPECT_NE(summary.find(",3\n"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Run, UnwritableOutputIsIoError) {
  ExperimentConfig c = parse_config("iterations = 3", Mode::pdmm);
  c.out = "/nonexistent-dir/run.csv";
  EXPECT_THROW(run_to_file(c), IoError);
}
