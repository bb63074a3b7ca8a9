#include "pkgcn/simgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pkgcn/errors.hpp"

namespace pkgcn {

ConfusionCounts::ConfusionCounts(std::size_t num_classes) : m_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ConfigError("confusion counts need at least one class");
}

void ConfusionCounts::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= m_ || predicted >= m_) {
    throw InputError("confusion counts: class pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                     ") outside [0, " + std::to_string(m_) + ")");
  }
  counts_[truth * m_ + predicted] += n;
}

std::uint64_t ConfusionCounts::total(std::size_t truth) const {
  const auto row = counts_.begin() + static_cast<std::ptrdiff_t>(truth * m_);
  return std::accumulate(row, row + static_cast<std::ptrdiff_t>(m_), std::uint64_t{0});
}

std::uint64_t ConfusionCounts::grand_total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.m_ != m_) {
    throw ShapeError("confusion counts: cannot merge " + std::to_string(other.m_) + " classes into " +
                     std::to_string(m_));
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ConfusionCounts record_confusion(std::span<const std::int32_t> truth, std::span<const std::int32_t> predicted,
                                 std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw InputError("record_confusion: " + std::to_string(truth.size()) + " truths vs " +
                     std::to_string(predicted.size()) + " predictions");
  }
  ConfusionCounts counts(num_classes);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] < 0 || predicted[k] < 0) {
      throw InputError("record_confusion: negative label at position " + std::to_string(k));
    }
    counts.add(static_cast<std::size_t>(truth[k]), static_cast<std::size_t>(predicted[k]));
  }
  return counts;
}

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b) {
  ConfusionCounts out = a;
  out.merge(b);
  return out;
}

SimilarityGraph build_similarity(const ConfusionCounts& counts, EdgeWeighting weighting) {
  const std::size_t m = counts.num_classes();
  SimilarityGraph g{m, std::vector<double>(m * m, 0.0)};
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint64_t total = counts.total(i);
    if (total == 0) throw ConfigError("build_similarity: class " + std::to_string(i) + " has no validation examples");
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const double c = static_cast<double>(counts.at(i, j));
      g.weights[i * m + j] = weighting == EdgeWeighting::ratio ? c / static_cast<double>(total) : c;
    }
  }
  return g;
}

NormalizedAdjacency normalize(const SimilarityGraph& graph) {
  const std::size_t m = graph.m;
  if (graph.weights.size() != m * m) throw ShapeError("normalize: weight matrix is not m x m");
  std::vector<double> with_loops = graph.weights;
  for (std::size_t i = 0; i < m; ++i) with_loops[i * m + i] += 1.0;
  std::vector<double> inv_sqrt_degree(m);
  for (std::size_t i = 0; i < m; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < m; ++j) d += with_loops[i * m + j];
    inv_sqrt_degree[i] = 1.0 / std::sqrt(d);
  }
  NormalizedAdjacency out{m, std::vector<double>(m * m)};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out.values[i * m + j] = inv_sqrt_degree[i] * with_loops[i * m + j] * inv_sqrt_degree[j];
    }
  }
  return out;
}

std::vector<std::string> default_labels(std::size_t m) {
  std::vector<std::string> labels(m);
  for (std::size_t i = 0; i < m; ++i) labels[i] = std::to_string(i);
  return labels;
}

std::size_t count_edges(std::span<const double> matrix, std::size_t m, double threshold) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j && matrix[i * m + j] >= threshold && matrix[i * m + j] > 0.0) ++n;
    }
  }
  return n;
}

std::string graph_to_dot(std::span<const double> matrix, std::size_t m, const GraphExportOptions& options) {
  if (matrix.size() != m * m) throw ShapeError("graph_to_dot: matrix is not m x m");
  const auto labels = options.labels.empty() ? default_labels(m) : options.labels;
  if (labels.size() != m) throw InputError("graph_to_dot: expected " + std::to_string(m) + " labels");

  double max_weight = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) max_weight = std::max(max_weight, matrix[i * m + j]);
    }
  }
  std::ostringstream os;
  os << "digraph misclassification {\n";
  for (std::size_t i = 0; i < m; ++i) os << "  n" << i << " [label=\"" << labels[i] << "\"];\n";
  char buf[96];
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double w = matrix[i * m + j];
      if (i == j || w <= 0.0 || w < options.threshold) continue;
      std::snprintf(buf, sizeof buf, "[weight=%.6g, penwidth=%.3f, label=\"%.3f\"]", w, 1.0 + 7.0 * w / max_weight, w);
      os << "  n" << i << " -> n" << j << ' ' << buf << ";\n";
    }
  }
  os << "}\n";
  return os.str();
}

std::string graph_to_json(const SimilarityGraph& graph, const NormalizedAdjacency& normalized,
                          const std::vector<std::string>& labels) {
  const std::size_t m = graph.m;
  if (normalized.m != m) throw ShapeError("graph_to_json: similarity and normalized sizes differ");
  auto rows = [m](const std::vector<double>& flat) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < m; ++i) {
      out.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(i * m),
                                        flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * m)));
    }
    return out;
  };
  nlohmann::json doc;
  doc["m"] = m;
  doc["labels"] = labels.empty() ? default_labels(m) : labels;
  doc["A"] = rows(graph.weights);
  doc["normalized"] = rows(normalized.values);
  return doc.dump(2);
}

void export_graph(const SimilarityGraph& graph, const NormalizedAdjacency& normalized, GraphFormat format,
                  const std::filesystem::path& path, const GraphExportOptions& options) {
  const std::string text = format == GraphFormat::dot ? graph_to_dot(graph.weights, graph.m, options)
                                                      : graph_to_json(graph, normalized, options.labels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

GraphDocument parse_graph_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    GraphDocument g;
    g.m = doc.at("m").get<std::size_t>();
    g.labels = doc.at("labels").get<std::vector<std::string>>();
    auto flatten = [&](const nlohmann::json& rows) {
      std::vector<double> flat;
      if (rows.size() != g.m) throw FormatError("graph json: matrix has wrong row count");
      for (const auto& r : rows) {
        auto row = r.get<std::vector<double>>();
        if (row.size() != g.m) throw FormatError("graph json: matrix has wrong column count");
        flat.insert(flat.end(), row.begin(), row.end());
      }
      return flat;
    };
    g.graph = {g.m, flatten(doc.at("A"))};
    g.normalized = {g.m, flatten(doc.at("normalized"))};
    if (g.labels.size() != g.m) throw FormatError("graph json: label count differs from m");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("graph json: ") + e.what());
  }
}

GraphDocument read_graph_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_graph_json(ss.str());
}

}  // namespace pkgcn
