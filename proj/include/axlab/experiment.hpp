#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "axlab/config.hpp"
#include "axlab/pdmm.hpp"

namespace axlab {

/// One CSV row. Which fields are populated depends on the mode; missing
/// values are written as empty cells.
struct RunRecord {
  std::int64_t step = 0;  // iteration for pdmm
  std::optional<double> train_loss;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  std::optional<double> max_residual;
  std::optional<double> oracle_distance;
  std::optional<double> wall_ms;

  bool operator==(const RunRecord&) const = default;
};

/// Header for a mode: step/iteration followed by its metric columns.
std::vector<std::string> csv_columns(Mode mode, bool timing);

/// The metric stored under a CSV column name (nullopt for empty cells and
/// for the step column).
std::optional<double> csv_value(const RunRecord& record, const std::string& column);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> columns);
  /// Throws PreconditionError unless record.step exceeds the previous row's.
  void write(const RunRecord& record);
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::ostream& out_;
  std::vector<std::string> columns_;
  std::optional<std::int64_t> last_step_;
};

/// Inverse of CsvWriter; round-trips every value exactly.
std::vector<RunRecord> read_csv(std::istream& in);

struct RunSummary {
  std::vector<RunRecord> records;
  std::vector<std::string> columns;
};

/// Runs one seed of the configured mode, streaming rows to csv. Rows already
/// written stay written if the run throws (DivergenceError, IoError, ...).
RunSummary run_experiment(const ExperimentConfig& config, std::ostream& csv);

/// run_experiment into config.out.
RunSummary run_to_file(const ExperimentConfig& config);

/// Seeds seed, seed+1, ... seed+repeats-1 on up to `threads` workers. With one
/// repeat this is run_to_file. Otherwise each seed writes <stem>.seed<N><ext>
/// and <stem>.summary<ext> gets one "metric,mean,std,runs" row per final metric.
std::vector<RunSummary> run_sweep(const ExperimentConfig& config, std::size_t threads);

/// Thread cap from AXLAB_THREADS, defaulting to hardware concurrency.
std::size_t sweep_threads_from_env();

/// The bundled problem: two scalar nodes a = (1, 3) joined by x_1 - x_2 = 0.
pdmm::Problem two_node_problem();

}  // namespace axlab
