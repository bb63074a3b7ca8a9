#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pkgcn {

/// count(i, j): validation examples of true class i predicted as class j.
class ConfusionCounts {
 public:
  explicit ConfusionCounts(std::size_t num_classes);

  std::size_t num_classes() const noexcept { return m_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * m_ + predicted]; }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  /// Number of examples whose true class is `truth`.
  std::uint64_t total(std::size_t truth) const;
  std::uint64_t grand_total() const;

  /// Adds another partial tally in place. Merging is associative and commutative.
  void merge(const ConfusionCounts& other);

  bool operator==(const ConfusionCounts&) const = default;

 private:
  std::size_t m_;
  std::vector<std::uint64_t> counts_;
};

/// Throws InputError on length mismatch or labels outside [0, m).
ConfusionCounts record_confusion(std::span<const std::int32_t> truth, std::span<const std::int32_t> predicted,
                                 std::size_t num_classes);

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b);

enum class EdgeWeighting { ratio, count };

/// Directed weighted class graph with a zero diagonal. In ratio mode
/// weight(i, j) = count(i, j) / total(i) for i != j.
struct SimilarityGraph {
  std::size_t m = 0;
  std::vector<double> weights;  // row-major m x m

  double at(std::size_t i, std::size_t j) const { return weights[i * m + j]; }
  bool operator==(const SimilarityGraph&) const = default;
};

/// Throws ConfigError when a class has no validation examples.
SimilarityGraph build_similarity(const ConfusionCounts& counts, EdgeWeighting weighting = EdgeWeighting::ratio);

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I. Applied to the
/// directed matrix as is; no symmetrization.
struct NormalizedAdjacency {
  std::size_t m = 0;
  std::vector<double> values;  // row-major m x m

  double at(std::size_t i, std::size_t j) const { return values[i * m + j]; }
  bool operator==(const NormalizedAdjacency&) const = default;
};

NormalizedAdjacency normalize(const SimilarityGraph& graph);

enum class GraphFormat { dot, json };

struct GraphExportOptions {
  /// DOT only: off-diagonal weights below this are not drawn.
  double threshold = 0.01;
  /// Node labels; defaults to "0".."m-1".
  std::vector<std::string> labels;
};

std::vector<std::string> default_labels(std::size_t m);

/// DOT digraph over an m x m weight matrix, penwidth proportional to weight.
std::string graph_to_dot(std::span<const double> matrix, std::size_t m, const GraphExportOptions& options = {});

/// {"m", "labels", "A", "normalized"} with full double precision.
std::string graph_to_json(const SimilarityGraph& graph, const NormalizedAdjacency& normalized,
                          const std::vector<std::string>& labels = {});

/// Writes DOT (of the similarity matrix) or JSON. Throws IoError on failure.
void export_graph(const SimilarityGraph& graph, const NormalizedAdjacency& normalized, GraphFormat format,
                  const std::filesystem::path& path, const GraphExportOptions& options = {});

struct GraphDocument {
  std::size_t m = 0;
  std::vector<std::string> labels;
  SimilarityGraph graph;
  NormalizedAdjacency normalized;
};

GraphDocument parse_graph_json(const std::string& text);
GraphDocument read_graph_json(const std::filesystem::path& path);

/// Number of off-diagonal entries with weight >= threshold.
std::size_t count_edges(std::span<const double> matrix, std::size_t m, double threshold);

}  // namespace pkgcn
