#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pkgcn/config.hpp"
#include "pkgcn/data.hpp"
#include "pkgcn/train.hpp"

namespace pkgcn {

/// Full training pool and untouched test split for one dataset.
template <typename T>
struct DatasetSource {
  LabeledDataset<T> pool;
  LabeledDataset<T> test;
};

/// Reads MNIST (train-/t10k- IDX files) or CIFAR-10 (data_batch_1..5.bin,
/// test_batch.bin) from config.data_dir.
template <typename T>
DatasetSource<T> load_dataset_source(const TrainConfig& config);

template <typename T>
ExperimentData<T> make_experiment_data(const DatasetSource<T>& source, std::size_t train_size, std::size_t val_size,
                                       std::uint64_t seed);

/// One line of the results CSV.
struct ResultRow {
  std::string dataset;
  std::string arch;
  Variant variant = Variant::baseline;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t e1 = 0;
  std::size_t e2 = 0;
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  std::optional<double> delta_vs_baseline;
  double wall_s = 0.0;
  std::string error;  // non-empty when the run failed
};

inline constexpr const char* kResultsHeader = "dataset,arch,variant,T,V,e1,e2,seed,test_acc,delta_vs_baseline,wall_s";
std::string to_csv(const ResultRow& row);

struct RunOutcome {
  ResultRow row;
  RunMetrics metrics;
};

/// Trains one variant for one seed. When `run_dir` is set, writes
/// metrics.json, model.ckpt and (graph variants) graph.dot / graph.json there.
template <typename T>
RunOutcome run_one(const TrainConfig& config, const DatasetSource<T>& source, Variant variant, std::size_t train_size,
                   std::size_t val_size, std::uint64_t seed, const std::optional<std::filesystem::path>& run_dir);

struct TableCell {
  std::size_t size = 0;  // T (= V)
  Variant variant = Variant::baseline;
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<double> delta_vs_baseline;  // variant mean - baseline mean
  std::size_t failures = 0;
};

struct TableResult {
  std::vector<ResultRow> rows;
  std::vector<TableCell> cells;
};

/// Runs {sizes} x {variants} x {seeds}. A failing run is recorded and the grid
/// continues. Independent runs are spread over config.threads workers.
template <typename T>
TableResult reproduce_table(const TrainConfig& config, const DatasetSource<T>& source,
                            const std::optional<std::filesystem::path>& out_dir, std::ostream* log = nullptr);

/// Mean and sample standard deviation per (size, variant); deltas against
/// the baseline cell of the same size.
std::vector<TableCell> summarize(const std::vector<ResultRow>& rows);

std::string table_to_csv(const std::vector<TableCell>& cells, const std::string& dataset, const std::string& arch);
std::string table_to_text(const std::vector<TableCell>& cells);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pkgcn
