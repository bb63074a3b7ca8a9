#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pkgcn/config.hpp"
#include "pkgcn/data.hpp"
#include "pkgcn/nn.hpp"
#include "pkgcn/pkgcn.hpp"
#include "pkgcn/simgraph.hpp"

namespace pkgcn {

struct RunMetrics {
  std::string dataset;
  std::string arch;
  Variant variant = Variant::baseline;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t epochs_stage1 = 0;  // baseline: the whole budget
  std::size_t epochs_stage2 = 0;
  std::uint64_t seed = 0;
  std::vector<int> stage;  // 1 or 2 per recorded epoch
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;  // percent; empty entries skipped when tracking is off
  double stage1_val_accuracy = 0.0;  // percent, base model at the end of stage 1
  double test_accuracy = 0.0;        // percent
  double wall_seconds = 0.0;
  std::string config_json;
};

std::string metrics_to_json(const RunMetrics& metrics);

template <typename T>
struct ExperimentData {
  LabeledDataset<T> train;
  LabeledDataset<T> validation;
  LabeledDataset<T> test;
};

/// Called after every epoch with (stage, epoch index within the run, train loss).
using EpochCallback = std::function<void(int, std::size_t, double)>;

template <typename T>
std::vector<std::int32_t> predict(const Model<T>& model, const LabeledDataset<T>& data, std::size_t chunk = 256);
template <typename T>
std::vector<std::int32_t> predict(const PkGcnModel<T>& model, const LabeledDataset<T>& data,
                                  std::size_t chunk = 256);

/// Percentage of matching labels.
double accuracy_percent(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth);

template <typename T>
struct BaselineResult {
  Model<T> model;
  RunMetrics metrics;
};

/// Trains the base network alone for the full paired budget
/// (epochs_stage1 + epochs_stage2).
template <typename T>
BaselineResult<T> train_baseline(const TrainConfig& config, const ExperimentData<T>& data, std::uint64_t seed,
                                 const EpochCallback& on_epoch = {});

template <typename T>
struct TwoStageResult {
  PkGcnModel<T> model;
  RunMetrics metrics;
  ConfusionCounts confusion{1};
  NormalizedAdjacency adjacency;
};

/// Stage 1 trains the base network; its validation mistakes give the class
/// graph; stage 2 trains base, class embeddings and graph head together with
/// the adjacency held fixed. Optimizer state restarts at stage 2.
template <typename T>
TwoStageResult<T> two_stage_train(const TrainConfig& config, const ExperimentData<T>& data, std::uint64_t seed,
                                  const EpochCallback& on_epoch = {});

/// Stops glibc from returning large freed buffers to the OS. Training
/// reallocates the same activation sizes every step, and the page faults
/// otherwise cost about a third of the runtime. No-op elsewhere.
void tune_allocator_for_training();

/// Deterministic stream splitting for per-purpose seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pkgcn
