#include "pkgcn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pkgcn/checkpoint.hpp"
#include "pkgcn/errors.hpp"

namespace pkgcn {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
DatasetSource<T> load_dataset_source(const TrainConfig& config) {
  const auto& dir = config.data_dir;
  auto need = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw IoError("dataset file not found: " + p.string());
    return p;
  };
  DatasetSource<T> s;
  if (config.dataset == "mnist") {
    s.pool = load_mnist<T>(need(dir / "train-images-idx3-ubyte"), need(dir / "train-labels-idx1-ubyte"));
    s.test = load_mnist<T>(need(dir / "t10k-images-idx3-ubyte"), need(dir / "t10k-labels-idx1-ubyte"));
  } else if (config.dataset == "cifar10") {
    std::vector<std::filesystem::path> batches;
    for (int k = 1; k <= 5; ++k) batches.push_back(need(dir / ("data_batch_" + std::to_string(k) + ".bin")));
    s.pool = load_cifar10<T>(batches);
    const std::filesystem::path test[] = {need(dir / "test_batch.bin")};
    s.test = load_cifar10<T>(test);
  } else {
    throw ConfigError("unknown dataset '" + config.dataset + "'");
  }
  return s;
}

template <typename T>
ExperimentData<T> make_experiment_data(const DatasetSource<T>& source, std::size_t train_size, std::size_t val_size,
                                       std::uint64_t seed) {
  auto split = stratified_split(source.pool, train_size, val_size, seed);
  return {std::move(split.train), std::move(split.validation), source.test};
}

std::string to_csv(const ResultRow& r) {
  char acc[32], wall[32], delta[32] = "";
  std::snprintf(acc, sizeof acc, "%.2f", r.test_acc);
  std::snprintf(wall, sizeof wall, "%.1f", r.wall_s);
  if (r.delta_vs_baseline) std::snprintf(delta, sizeof delta, "%+.2f", *r.delta_vs_baseline);
  std::ostringstream os;
  os << r.dataset << ',' << r.arch << ',' << to_string(r.variant) << ',' << r.train_size << ',' << r.val_size << ','
     << r.e1 << ',' << r.e2 << ',' << r.seed << ',' << (r.error.empty() ? acc : "error") << ',' << delta << ','
     << wall;
  return os.str();
}

template <typename T>
RunOutcome run_one(const TrainConfig& config, const DatasetSource<T>& source, Variant variant, std::size_t train_size,
                   std::size_t val_size, std::uint64_t seed, const std::optional<std::filesystem::path>& run_dir) {
  TrainConfig c = config;
  c.variant = variant;
  c.train_size = train_size;
  c.val_size = val_size;
  c.seeds = {seed};
  const auto data = make_experiment_data(source, train_size, val_size, seed);
  if (run_dir) std::filesystem::create_directories(*run_dir);

  RunOutcome out;
  if (variant == Variant::baseline) {
    auto r = train_baseline(c, data, seed);
    out.metrics = std::move(r.metrics);
    if (run_dir) save_checkpoint(r.model, *run_dir / "model.ckpt");
  } else {
    auto r = two_stage_train(c, data, seed);
    out.metrics = std::move(r.metrics);
    if (run_dir) {
      save_checkpoint(r.model, *run_dir / "model.ckpt");
      GraphExportOptions g;
      g.threshold = c.graph_threshold;
      export_graph(r.model.similarity, r.adjacency, GraphFormat::dot, *run_dir / "graph.dot", g);
      export_graph(r.model.similarity, r.adjacency, GraphFormat::json, *run_dir / "graph.json", g);
    }
  }
  if (run_dir) write_text(*run_dir / "metrics.json", metrics_to_json(out.metrics));

  const auto& m = out.metrics;
  out.row = {c.dataset, c.arch,    variant, train_size,      val_size, m.epochs_stage1, m.epochs_stage2,
             seed,      m.test_accuracy, std::nullopt, m.wall_seconds, ""};
  return out;
}

std::vector<TableCell> summarize(const std::vector<ResultRow>& rows) {
  std::map<std::pair<std::size_t, int>, TableCell> cells;
  for (const auto& r : rows) {
    auto& cell = cells[{r.train_size, static_cast<int>(r.variant)}];
    cell.size = r.train_size;
    cell.variant = r.variant;
    if (r.error.empty()) cell.accuracies.push_back(r.test_acc);
    else ++cell.failures;
  }
  std::vector<TableCell> out;
  for (auto& [key, cell] : cells) {
    const double n = static_cast<double>(cell.accuracies.size());
    if (n > 0) {
      for (double a : cell.accuracies) cell.mean += a;
      cell.mean /= n;
      double ss = 0.0;
      for (double a : cell.accuracies) ss += (a - cell.mean) * (a - cell.mean);
      cell.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    }
    out.push_back(cell);
  }
  for (auto& cell : out) {
    auto base = std::find_if(out.begin(), out.end(), [&](const TableCell& c) {
      return c.size == cell.size && c.variant == Variant::baseline && !c.accuracies.empty();
    });
    if (base != out.end() && !cell.accuracies.empty()) cell.delta_vs_baseline = cell.mean - base->mean;
  }
  return out;
}

std::string table_to_csv(const std::vector<TableCell>& cells, const std::string& dataset, const std::string& arch) {
  std::ostringstream os;
  os << "dataset,arch,T,V,variant,runs,mean_acc,std_acc,delta_vs_baseline,failures\n";
  char buf[128];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,", c.mean, c.stddev);
    os << dataset << ',' << arch << ',' << c.size << ',' << c.size << ',' << to_string(c.variant) << ','
       << c.accuracies.size() << ',' << buf;
    if (c.delta_vs_baseline) {
      std::snprintf(buf, sizeof buf, "%+.2f", *c.delta_vs_baseline);
      os << buf;
    }
    os << ',' << c.failures << '\n';
  }
  return os.str();
}

std::string table_to_text(const std::vector<TableCell>& cells) {
  std::vector<std::size_t> sizes;
  for (const auto& c : cells) {
    if (std::find(sizes.begin(), sizes.end(), c.size) == sizes.end()) sizes.push_back(c.size);
  }
  std::sort(sizes.begin(), sizes.end());
  std::ostringstream os;
  char buf[64];
  os << "variant   ";
  for (auto s : sizes) {
    std::snprintf(buf, sizeof buf, " %16s", (std::to_string(s) + "|" + std::to_string(s)).c_str());
    os << buf;
  }
  os << '\n';
  for (auto v : {Variant::baseline, Variant::v1, Variant::v2}) {
    bool any = false;
    std::ostringstream line;
    std::snprintf(buf, sizeof buf, "%-10s", std::string(to_string(v)).c_str());
    line << buf;
    for (auto s : sizes) {
      auto it = std::find_if(cells.begin(), cells.end(), [&](const TableCell& c) { return c.size == s && c.variant == v; });
      if (it == cells.end() || it->accuracies.empty()) {
        std::snprintf(buf, sizeof buf, " %16s", "-");
      } else {
        any = true;
        if (v == Variant::baseline || !it->delta_vs_baseline) {
          std::snprintf(buf, sizeof buf, " %9.2f+-%4.2f", it->mean, it->stddev);
        } else {
          std::snprintf(buf, sizeof buf, " %8.2f (%+5.2f)", it->mean, *it->delta_vs_baseline);
        }
      }
      line << buf;
    }
    if (any) os << line.str() << '\n';
  }
  return os.str();
}

template <typename T>
TableResult reproduce_table(const TrainConfig& config, const DatasetSource<T>& source,
                            const std::optional<std::filesystem::path>& out_dir, std::ostream* log) {
  if (config.seeds.empty()) throw ConfigError("reproduce-table: seed list is empty");
  if (config.table_sizes.empty()) throw ConfigError("reproduce-table: table_sizes is empty");
  struct Job {
    std::size_t size;
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto s : config.table_sizes) {
    for (auto v : config.table_variants) {
      for (auto seed : config.seeds) jobs.push_back({s, v, seed});
    }
  }
  std::vector<ResultRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const Job& j = jobs[k];
      std::optional<std::filesystem::path> dir;
      if (out_dir) {
        dir = *out_dir / (std::string(to_string(j.variant)) + "_T" + std::to_string(j.size) + "_seed" +
                          std::to_string(j.seed));
      }
      try {
        rows[k] = run_one(config, source, j.variant, j.size, j.size, j.seed, dir).row;
      } catch (const std::exception& e) {
        const bool baseline = j.variant == Variant::baseline;
        rows[k] = {config.dataset, config.arch, j.variant, j.size, j.size,
                   baseline ? config.total_epochs() : config.epochs_stage1, baseline ? 0 : config.epochs_stage2,
                   j.seed, 0.0, std::nullopt, 0.0, e.what()};
      }
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << to_csv(rows[k]) << (rows[k].error.empty() ? "" : "  # " + rows[k].error) << std::endl;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(config.threads, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Per-seed delta against the baseline run with the same size and seed.
  for (auto& r : rows) {
    if (!r.error.empty()) continue;
    auto base = std::find_if(rows.begin(), rows.end(), [&](const ResultRow& b) {
      return b.variant == Variant::baseline && b.train_size == r.train_size && b.seed == r.seed && b.error.empty();
    });
    if (base != rows.end()) r.delta_vs_baseline = r.test_acc - base->test_acc;
  }
  TableResult result{rows, summarize(rows)};
  if (out_dir) {
    std::ostringstream csv;
    csv << kResultsHeader << '\n';
    for (const auto& r : rows) csv << to_csv(r) << '\n';
    write_text(*out_dir / "results.csv", csv.str());
    write_text(*out_dir / "table.csv", table_to_csv(result.cells, config.dataset, config.arch));
    write_text(*out_dir / "table.txt", table_to_text(result.cells));
  }
  return result;
}

#define PKGCN_INSTANTIATE_EXPERIMENT(T)                                                                           \
  template DatasetSource<T> load_dataset_source(const TrainConfig&);                                             \
  template ExperimentData<T> make_experiment_data(const DatasetSource<T>&, std::size_t, std::size_t,             \
                                                  std::uint64_t);                                                \
  template RunOutcome run_one(const TrainConfig&, const DatasetSource<T>&, Variant, std::size_t, std::size_t,    \
                              std::uint64_t, const std::optional<std::filesystem::path>&);                       \
  template TableResult reproduce_table(const TrainConfig&, const DatasetSource<T>&,                              \
                                       const std::optional<std::filesystem::path>&, std::ostream*);

PKGCN_INSTANTIATE_EXPERIMENT(float)
PKGCN_INSTANTIATE_EXPERIMENT(double)

}  // namespace pkgcn
