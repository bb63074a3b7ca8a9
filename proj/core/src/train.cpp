#include "pkgcn/train.hpp"

#include <chrono>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"
#include "pkgcn/ops.hpp"
#include "pkgcn/optim.hpp"

namespace pkgcn {

namespace {

constexpr std::uint64_t kStreamEpoch = 0x1000;
constexpr std::uint64_t kStreamGcnInit = 0x2000;

RunMetrics metrics_header(const TrainConfig& c, Variant variant, std::uint64_t seed) {
  RunMetrics m;
  m.dataset = c.dataset;
  m.arch = c.arch;
  m.variant = variant;
  m.train_size = c.train_size;
  m.val_size = c.val_size;
  m.epochs_stage1 = variant == Variant::baseline ? c.total_epochs() : c.epochs_stage1;
  m.epochs_stage2 = variant == Variant::baseline ? 0 : c.epochs_stage2;
  m.seed = seed;
  m.config_json = config_to_json(c);
  return m;
}

template <typename T>
void require_nonempty(const ExperimentData<T>& d) {
  if (d.train.size() == 0 || d.validation.size() == 0 || d.test.size() == 0) {
    throw ConfigError("training needs non-empty train, validation and test sets");
  }
}

template <typename T>
Model<T> build_model(const TrainConfig& c, std::uint64_t seed) {
  return Model<T>::build(resolve_layers(c), resolve_input(c), seed);
}

// One pass over the training set; returns the example-weighted mean loss.
template <typename T, typename Step>
double run_epoch(const LabeledDataset<T>& train, std::size_t batch_size, std::uint64_t epoch_seed, Step&& step) {
  double total = 0.0;
  for (const auto& idx : make_batches(train.size(), batch_size, epoch_seed)) {
    auto [images, labels] = gather(train, idx);
    total += step(images, labels) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(train.size());
}

template <typename T, typename Scorer>
std::vector<std::int32_t> predict_chunked(const LabeledDataset<T>& data, std::size_t chunk, Scorer&& score) {
  std::vector<std::int32_t> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.resize(std::min(chunk, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto [images, labels] = gather(data, idx);
    auto pred = argmax_rows(score(images));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void tune_allocator_for_training() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double accuracy_percent(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth) {
  if (predicted.size() != truth.size()) throw InputError("accuracy: prediction and label counts differ");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

template <typename T>
std::vector<std::int32_t> predict(const Model<T>& model, const LabeledDataset<T>& data, std::size_t chunk) {
  return predict_chunked(data, chunk, [&](const Tensor<T>& x) { return forward(model, x).logits; });
}

template <typename T>
std::vector<std::int32_t> predict(const PkGcnModel<T>& model, const LabeledDataset<T>& data, std::size_t chunk) {
  return predict_chunked(data, chunk, [&](const Tensor<T>& x) { return pkgcn_forward(model, x).logits; });
}

template <typename T>
BaselineResult<T> train_baseline(const TrainConfig& config, const ExperimentData<T>& data, std::uint64_t seed,
                                 const EpochCallback& on_epoch) {
  require_nonempty(data);
  const auto t0 = std::chrono::steady_clock::now();
  BaselineResult<T> r{build_model<T>(config, seed), metrics_header(config, Variant::baseline, seed)};
  std::vector<Shape> shapes;
  for (const auto& p : r.model.params()) shapes.push_back(p.value.shape());
  AdaDelta<T> opt(shapes, config.optimizer);
  std::vector<Tensor<T>*> params;
  for (auto& p : r.model.params()) params.push_back(&p.value);

  for (std::size_t epoch = 0; epoch < config.total_epochs(); ++epoch) {
    const double loss = run_epoch(data.train, config.batch_size, derive_seed(seed, kStreamEpoch + epoch),
                                  [&](const Tensor<T>& x, const std::vector<std::int32_t>& y) {
                                    auto fwd = forward(r.model, x);
                                    auto ce = softmax_cross_entropy(fwd.logits, y);
                                    auto grads = backward(r.model, fwd.cache, ce.grad_logits);
                                    opt.step(params, grads);
                                    return ce.loss;
                                  });
    r.metrics.stage.push_back(1);
    r.metrics.train_loss.push_back(loss);
    if (config.track_validation) {
      r.metrics.val_accuracy.push_back(accuracy_percent(predict(r.model, data.validation), data.validation.labels));
    }
    if (on_epoch) on_epoch(1, epoch, loss);
  }
  r.metrics.stage1_val_accuracy = accuracy_percent(predict(r.model, data.validation), data.validation.labels);
  r.metrics.test_accuracy = accuracy_percent(predict(r.model, data.test), data.test.labels);
  r.metrics.wall_seconds = elapsed(t0);
  return r;
}

template <typename T>
TwoStageResult<T> two_stage_train(const TrainConfig& config, const ExperimentData<T>& data, std::uint64_t seed,
                                  const EpochCallback& on_epoch) {
  require_nonempty(data);
  if (config.variant == Variant::baseline) throw ConfigError("two_stage_train needs variant v1 or v2");
  const auto t0 = std::chrono::steady_clock::now();
  RunMetrics metrics = metrics_header(config, config.variant, seed);

  // Stage 1: base network alone.
  Model<T> base = build_model<T>(config, seed);
  {
    std::vector<Shape> shapes;
    for (const auto& p : base.params()) shapes.push_back(p.value.shape());
    AdaDelta<T> opt(shapes, config.optimizer);
    std::vector<Tensor<T>*> params;
    for (auto& p : base.params()) params.push_back(&p.value);
    for (std::size_t epoch = 0; epoch < config.epochs_stage1; ++epoch) {
      const double loss = run_epoch(data.train, config.batch_size, derive_seed(seed, kStreamEpoch + epoch),
                                    [&](const Tensor<T>& x, const std::vector<std::int32_t>& y) {
                                      auto fwd = forward(base, x);
                                      auto ce = softmax_cross_entropy(fwd.logits, y);
                                      auto grads = backward(base, fwd.cache, ce.grad_logits);
                                      opt.step(params, grads);
                                      return ce.loss;
                                    });
      metrics.stage.push_back(1);
      metrics.train_loss.push_back(loss);
      if (config.track_validation) {
        metrics.val_accuracy.push_back(accuracy_percent(predict(base, data.validation), data.validation.labels));
      }
      if (on_epoch) on_epoch(1, epoch, loss);
    }
  }

  // Class graph from validation mistakes, computed once.
  const auto val_pred = predict(base, data.validation);
  metrics.stage1_val_accuracy = accuracy_percent(val_pred, data.validation.labels);
  ConfusionCounts confusion = record_confusion(data.validation.labels, val_pred, base.num_classes());
  SimilarityGraph similarity = build_similarity(confusion, config.edge_weighting);
  NormalizedAdjacency adjacency = normalize(similarity);

  PkGcnOptions opts;
  opts.variant = config.variant == Variant::v1 ? HeadVariant::v1 : HeadVariant::v2;
  opts.activation = config.activation;
  opts.head_half_width = config.head_half_width;
  opts.identity_noise = config.gcn_init_noise;
  opts.seed = derive_seed(seed, kStreamGcnInit);
  PkGcnModel<T> model = assemble_pkgcn(std::move(base), std::move(similarity), adjacency, opts);

  // Stage 2: everything trains except the adjacency (and the base, when frozen).
  {
    auto all = model.trainable();
    const std::size_t first = config.freeze_base ? model.base_param_count() : 0;
    std::vector<Tensor<T>*> params(all.begin() + static_cast<std::ptrdiff_t>(first), all.end());
    std::vector<Shape> shapes;
    for (auto* p : params) shapes.push_back(p->shape());
    AdaDelta<T> opt(shapes, config.optimizer);
    for (std::size_t e = 0; e < config.epochs_stage2; ++e) {
      const std::size_t epoch = config.epochs_stage1 + e;
      const double loss = run_epoch(data.train, config.batch_size, derive_seed(seed, kStreamEpoch + epoch),
                                    [&](const Tensor<T>& x, const std::vector<std::int32_t>& y) {
                                      auto fwd = pkgcn_forward(model, x);
                                      auto ce = softmax_cross_entropy(fwd.logits, y);
                                      auto grads = pkgcn_backward(model, fwd, ce.grad_logits);
                                      grads.erase(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(first));
                                      opt.step(params, grads);
                                      return ce.loss;
                                    });
      metrics.stage.push_back(2);
      metrics.train_loss.push_back(loss);
      if (config.track_validation) {
        metrics.val_accuracy.push_back(accuracy_percent(predict(model, data.validation), data.validation.labels));
      }
      if (on_epoch) on_epoch(2, epoch, loss);
    }
  }

  metrics.test_accuracy = accuracy_percent(predict(model, data.test), data.test.labels);
  metrics.wall_seconds = elapsed(t0);
  return {std::move(model), std::move(metrics), std::move(confusion), std::move(adjacency)};
}

std::string metrics_to_json(const RunMetrics& m) {
  nlohmann::json j;
  j["dataset"] = m.dataset;
  j["arch"] = m.arch;
  j["variant"] = std::string(to_string(m.variant));
  j["train_size"] = m.train_size;
  j["val_size"] = m.val_size;
  j["epochs_stage1"] = m.epochs_stage1;
  j["epochs_stage2"] = m.epochs_stage2;
  j["seed"] = m.seed;
  j["stage"] = m.stage;
  j["train_loss"] = m.train_loss;
  j["val_accuracy"] = m.val_accuracy;
  j["stage1_val_accuracy"] = m.stage1_val_accuracy;
  j["test_accuracy"] = m.test_accuracy;
  j["wall_seconds"] = m.wall_seconds;
  j["config"] = nlohmann::json::parse(m.config_json.empty() ? "{}" : m.config_json);
  j["fixed_choices"] = {{"pixel_scaling", "p/255"},
                        {"weight_init", "he_uniform, zero bias"},
                        {"gcn_weight_init", "identity + uniform(-gcn_init_noise, gcn_init_noise)"},
                        {"head_init", "he_uniform weight, zero bias"},
                        {"stage2_optimizer", "fresh AdaDelta state"}};
  return j.dump(2);
}

#define PKGCN_INSTANTIATE_TRAIN(T)                                                                                 \
  template std::vector<std::int32_t> predict(const Model<T>&, const LabeledDataset<T>&, std::size_t);             \
  template std::vector<std::int32_t> predict(const PkGcnModel<T>&, const LabeledDataset<T>&, std::size_t);        \
  template BaselineResult<T> train_baseline(const TrainConfig&, const ExperimentData<T>&, std::uint64_t,          \
                                            const EpochCallback&);                                                \
  template TwoStageResult<T> two_stage_train(const TrainConfig&, const ExperimentData<T>&, std::uint64_t,         \
                                             const EpochCallback&);

PKGCN_INSTANTIATE_TRAIN(float)
PKGCN_INSTANTIATE_TRAIN(double)

}  // namespace pkgcn
