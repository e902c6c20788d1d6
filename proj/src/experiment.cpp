#include "axlab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "axlab/data.hpp"
#include "axlab/transformer.hpp"

namespace axlab {

pdmm::Problem two_node_problem() {
  std::istringstream text(
      "node 0 1 quadratic 1\n"
      "node 1 1 quadratic 3\n"
      "edge 0 1 1 1 -1 0\n");
  return pdmm::read_problem(text);
}

namespace {

class Clock {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Separate streams for data sampling and initialisation, both derived from the run seed.
std::mt19937_64 batch_rng(std::uint64_t seed) { return std::mt19937_64(seed * 0x2545f4914f6cdd1dULL + 1); }

bool is_eval_step(const ExperimentConfig& c, std::size_t step) {
  return step == c.steps || (c.eval_every > 0 && step % c.eval_every == 0);
}

RunSummary run_train_lm(const ExperimentConfig& c, CsvWriter& csv) {
  RunSummary summary{{}, csv.columns()};
  const auto corpus = generate_synthetic_corpus(c.corpus, c.seed, c.corpus_length, {c.vocab, c.period});
  const auto split = static_cast<std::size_t>(static_cast<double>(corpus.size()) * (1.0 - c.val_fraction));
  const std::span<const int> train(corpus.data(), split);
  const std::span<const int> val(corpus.data() + split, corpus.size() - split);
  if (train.size() < c.seq_len + 1 || val.size() < c.seq_len + 1) {
    throw PreconditionError("train-lm: corpus too short for seq_len " + std::to_string(c.seq_len));
  }
  Trainer trainer(c.model_config(), c.adam_config());
  auto rng = batch_rng(c.seed);
  const TokenBatch val_batch = fixed_token_batch(val, 16, c.seq_len);
  const Clock clock;
  for (std::size_t step = 1; step <= c.steps; ++step) {
    RunRecord r;
    r.step = static_cast<std::int64_t>(step);
    r.train_loss = trainer.train_step(sample_token_batch(train, c.batch_size, c.seq_len, rng));
    if (is_eval_step(c, step)) r.val_loss = trainer.evaluate_loss(val_batch);
    if (c.timing) r.wall_ms = clock.elapsed_ms();
    csv.write(r);
    summary.records.push_back(r);
  }
  return summary;
}

struct PatchData {
  PatchBatch train;
  PatchBatch val;
};

PatchBatch cifar_patches(const CifarBatch& batch, std::size_t patch) {
  PatchBatch out;
  for (std::size_t i = 0; i < batch.images.size(); ++i) {
    out.patches.push_back(image_to_patches(batch.images[i], patch));
    out.labels.push_back(batch.labels[i]);
  }
  return out;
}

PatchData load_patch_data(const ExperimentConfig& c) {
  if (c.dataset == Dataset::synthetic) {
    return {generate_patch_dataset(c.seed, c.train_examples, c.n_patches, c.patch_dim, c.n_classes),
            generate_patch_dataset(c.seed + 1000003, c.val_examples, c.n_patches, c.patch_dim, c.n_classes)};
  }
  if (c.cifar_train.empty()) throw PreconditionError("train-cls: dataset = cifar needs cifar_train");
  PatchData d;
  d.train = cifar_patches(load_cifar10_batch(c.cifar_train), c.patch_size);
  if (!c.cifar_val.empty()) {
    d.val = cifar_patches(load_cifar10_batch(c.cifar_val), c.patch_size);
  } else {
    const std::size_t keep = d.train.patches.size() - std::min(d.train.patches.size() / 10, c.val_examples);
    d.val.patches.assign(d.train.patches.begin() + static_cast<std::ptrdiff_t>(keep), d.train.patches.end());
    d.val.labels.assign(d.train.labels.begin() + static_cast<std::ptrdiff_t>(keep), d.train.labels.end());
    d.train.patches.resize(keep);
    d.train.labels.resize(keep);
  }
  if (d.val.patches.size() > c.val_examples) {
    d.val.patches.resize(c.val_examples);
    d.val.labels.resize(c.val_examples);
  }
  return d;
}

RunSummary run_train_cls(const ExperimentConfig& c, CsvWriter& csv) {
  RunSummary summary{{}, csv.columns()};
  const PatchData data = load_patch_data(c);
  if (data.train.patches.empty()) throw PreconditionError("train-cls: empty training set");
  Trainer trainer(c.model_config(), c.adam_config());
  auto rng = batch_rng(c.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.train.patches.size() - 1);
  const Clock clock;
  for (std::size_t step = 1; step <= c.steps; ++step) {
    PatchBatch batch;
    for (std::size_t b = 0; b < c.batch_size; ++b) {
      const std::size_t i = pick(rng);
      batch.patches.push_back(data.train.patches[i]);
      batch.labels.push_back(data.train.labels[i]);
    }
    RunRecord r;
    r.step = static_cast<std::int64_t>(step);
    r.train_loss = trainer.train_step(batch);
    if (is_eval_step(c, step) && !data.val.patches.empty()) r.val_accuracy = trainer.evaluate_accuracy(data.val);
    if (c.timing) r.wall_ms = clock.elapsed_ms();
    csv.write(r);
    summary.records.push_back(r);
  }
  return summary;
}

RunSummary run_pdmm(const ExperimentConfig& c, CsvWriter& csv) {
  RunSummary summary{{}, csv.columns()};
  pdmm::Problem problem = c.problem.empty() ? two_node_problem() : pdmm::load_problem(c.problem);
  const auto oracle = pdmm::centralized_oracle(problem);
  pdmm::Solver solver(std::move(problem), {c.rho, c.residual_cap, false});
  auto rng = batch_rng(c.seed);
  const Clock clock;
  for (std::size_t it = 1; it <= c.iterations; ++it) {
    if (c.async) {
      solver.iterate_async(rng);
    } else {
      solver.iterate_sync();
    }
    RunRecord r;
    r.step = static_cast<std::int64_t>(it);
    r.max_residual = solver.primal_residual().max;
    r.oracle_distance = pdmm::max_distance(solver.state().x, oracle.x);
    if (c.timing) r.wall_ms = clock.elapsed_ms();
    csv.write(r);
    summary.records.push_back(r);
  }
  return summary;
}

std::filesystem::path with_suffix(const std::filesystem::path& base, const std::string& suffix) {
  std::filesystem::path p = base;
  p.replace_filename(base.stem().string() + suffix + base.extension().string());
  return p;
}

void write_sweep_summary(const std::filesystem::path& path, const std::vector<RunSummary>& runs) {
  std::map<std::string, std::vector<double>> finals;
  std::vector<std::string> order;
  for (const auto& run : runs) {
    for (const auto& name : run.columns) {
      if (name == "step" || name == "iteration" || name == "wall_ms") continue;
      std::optional<double> last;
      for (const auto& r : run.records)
        if (auto v = csv_value(r, name)) last = v;
      if (!last) continue;
      if (!finals.contains(name)) order.push_back(name);
      finals[name].push_back(*last);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "metric,mean,std,runs\n";
  for (const auto& name : order) {
    const auto& v = finals[name];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu", mean, sd, v.size());
    out << name << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, std::ostream& csv) {
  CsvWriter writer(csv, csv_columns(config.mode, config.timing));
  switch (config.mode) {
    case Mode::train_lm: return run_train_lm(config, writer);
    case Mode::train_cls: return run_train_cls(config, writer);
    case Mode::pdmm: return run_pdmm(config, writer);
  }
  return {};
}

RunSummary run_to_file(const ExperimentConfig& config) {
  std::ofstream out(config.out, std::ios::trunc);
  if (!out) throw IoError("cannot open " + config.out + " for writing");
  return run_experiment(config, out);
}

std::vector<RunSummary> run_sweep(const ExperimentConfig& config, std::size_t threads) {
  if (config.repeats <= 1) return {run_to_file(config)};
  std::vector<RunSummary> results(config.repeats);
  std::vector<std::exception_ptr> errors(config.repeats);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t r = 0;
      {
        std::lock_guard lock(mu);
        if (next >= config.repeats) return;
        r = next++;
      }
      ExperimentConfig c = config;
      c.seed = config.seed + r;
      c.out = with_suffix(config.out, ".seed" + std::to_string(c.seed)).string();
      try {
        results[r] = run_to_file(c);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, config.repeats));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  write_sweep_summary(with_suffix(config.out, ".summary"), results);
  return results;
}

std::size_t sweep_threads_from_env() {
  if (const char* env = std::getenv("AXLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace axlab
