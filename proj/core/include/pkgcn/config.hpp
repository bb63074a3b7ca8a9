#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pkgcn/nn.hpp"
#include "pkgcn/optim.hpp"
#include "pkgcn/pkgcn.hpp"
#include "pkgcn/simgraph.hpp"

namespace pkgcn {

enum class Variant { baseline, v1, v2 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

/// One experiment. Every key has a default; the JSON file lists only what it
/// changes. See README for the key reference.
struct TrainConfig {
  std::string dataset = "mnist";  // mnist | cifar10
  std::filesystem::path data_dir = "data/mnist";
  std::string arch = "cnn1";      // cnn1 | cnn2 | vgg11 | custom
  std::vector<LayerSpec> layers;  // used when arch == "custom"
  InputShape input{1, 28, 28};    // used when arch == "custom"
  std::size_t width_divisor = 1;  // vgg11 only
  Variant variant = Variant::v1;
  std::size_t train_size = 300;
  std::size_t val_size = 300;
  std::size_t epochs_stage1 = 40;
  std::size_t epochs_stage2 = 160;
  std::size_t batch_size = 32;
  std::vector<std::uint64_t> seeds{1};
  AdaDeltaOptions optimizer{};
  Activation activation = Activation::relu;
  std::size_t head_half_width = 0;  // l; 0 selects n
  double gcn_init_noise = 0.01;
  bool freeze_base = false;
  EdgeWeighting edge_weighting = EdgeWeighting::ratio;
  double graph_threshold = 0.01;
  bool track_validation = true;
  std::string precision = "single";  // single | double
  std::size_t threads = 1;
  std::filesystem::path output_dir = "runs";
  std::vector<std::size_t> table_sizes{300, 500, 1000, 1500, 2000, 2500, 3000};
  std::vector<Variant> table_variants{Variant::baseline, Variant::v1, Variant::v2};

  /// Epoch budget of the baseline paired with this configuration.
  std::size_t total_epochs() const noexcept { return epochs_stage1 + epochs_stage2; }
};

/// Throws ConfigError on malformed JSON, unknown keys or invalid values.
TrainConfig parse_config(const std::string& json_text);
TrainConfig load_config(const std::filesystem::path& path);
void validate_config(const TrainConfig& config);

/// Full configuration including defaults, as JSON.
std::string config_to_json(const TrainConfig& config);

std::vector<LayerSpec> resolve_layers(const TrainConfig& config);
InputShape resolve_input(const TrainConfig& config);

}  // namespace pkgcn
