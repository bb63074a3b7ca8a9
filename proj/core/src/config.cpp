#include "pkgcn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pkgcn/errors.hpp"

namespace pkgcn {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::v1: return "v1";
    case Variant::v2: return "v2";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (auto v : {Variant::baseline, Variant::v1, Variant::v2}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected baseline, v1 or v2)");
}

namespace {

const std::set<std::string> kKeys = {
    "dataset",       "data_dir",        "arch",           "layers",          "input",
    "width_divisor", "variant",         "train_size",     "val_size",        "epochs_stage1",
    "epochs_stage2", "batch_size",      "seeds",          "rho",             "epsilon",
    "learning_rate", "activation",      "head_half_width", "gcn_init_noise", "freeze_base",
    "edge_weighting", "graph_threshold", "track_validation", "precision",     "threads",
    "output_dir",    "table_sizes",     "table_variants"};

}  // namespace

TrainConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKeys.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
  }
  TrainConfig c;
  try {
    c.dataset = j.value("dataset", c.dataset);
    c.data_dir = j.value("data_dir", c.data_dir.string());
    c.arch = j.value("arch", c.arch);
    if (j.contains("layers")) {
      for (const auto& lj : j.at("layers")) {
        LayerSpec l;
        l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
        l.filters = lj.value("filters", std::size_t{0});
        l.kernel = lj.value("kernel", std::size_t{0});
        l.units = lj.value("units", std::size_t{0});
        c.layers.push_back(l);
      }
    }
    if (j.contains("input")) {
      auto in = j.at("input").get<std::vector<std::size_t>>();
      if (in.size() != 3) throw ConfigError("config: input must be [channels, height, width]");
      c.input = {in[0], in[1], in[2]};
    }
    c.width_divisor = j.value("width_divisor", c.width_divisor);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.train_size = j.value("train_size", c.train_size);
    c.val_size = j.value("val_size", c.val_size);
    c.epochs_stage1 = j.value("epochs_stage1", c.epochs_stage1);
    c.epochs_stage2 = j.value("epochs_stage2", c.epochs_stage2);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.optimizer.rho = j.value("rho", c.optimizer.rho);
    c.optimizer.epsilon = j.value("epsilon", c.optimizer.epsilon);
    c.optimizer.learning_rate = j.value("learning_rate", c.optimizer.learning_rate);
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    c.head_half_width = j.value("head_half_width", c.head_half_width);
    c.gcn_init_noise = j.value("gcn_init_noise", c.gcn_init_noise);
    c.freeze_base = j.value("freeze_base", c.freeze_base);
    if (j.contains("edge_weighting")) {
      const auto w = j.at("edge_weighting").get<std::string>();
      if (w == "ratio") c.edge_weighting = EdgeWeighting::ratio;
      else if (w == "count") c.edge_weighting = EdgeWeighting::count;
      else throw ConfigError("config: edge_weighting must be ratio or count");
    }
    c.graph_threshold = j.value("graph_threshold", c.graph_threshold);
    c.track_validation = j.value("track_validation", c.track_validation);
    c.precision = j.value("precision", c.precision);
    c.threads = j.value("threads", c.threads);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    if (j.contains("table_sizes")) c.table_sizes = j.at("table_sizes").get<std::vector<std::size_t>>();
    if (j.contains("table_variants")) {
      c.table_variants.clear();
      for (const auto& v : j.at("table_variants")) c.table_variants.push_back(parse_variant(v.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const TrainConfig& c) {
  if (c.dataset != "mnist" && c.dataset != "cifar10") throw ConfigError("config: dataset must be mnist or cifar10");
  if (c.arch == "custom") {
    if (c.layers.empty()) throw ConfigError("config: arch 'custom' requires a layers list");
  } else {
    preset_layers(c.arch, c.width_divisor == 0 ? 1 : c.width_divisor);
  }
  if (c.width_divisor == 0) throw ConfigError("config: width_divisor must be positive");
  if (c.train_size == 0 || c.val_size == 0) throw ConfigError("config: train_size and val_size must be positive");
  if (c.batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (c.seeds.empty()) throw ConfigError("config: seed list is empty");
  if (c.precision != "single" && c.precision != "double") throw ConfigError("config: precision must be single or double");
  if (c.threads == 0) throw ConfigError("config: threads must be positive");
  if (c.gcn_init_noise < 0.0) throw ConfigError("config: gcn_init_noise must be non-negative");
  if (!(c.optimizer.rho > 0.0 && c.optimizer.rho < 1.0)) throw ConfigError("config: rho must lie in (0, 1)");
  if (!(c.optimizer.epsilon > 0.0)) throw ConfigError("config: epsilon must be positive");
  if (!(c.optimizer.learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
  if (c.total_epochs() == 0) throw ConfigError("config: epoch budget is zero");
  if (c.table_variants.empty()) throw ConfigError("config: table_variants is empty");
}

std::vector<LayerSpec> resolve_layers(const TrainConfig& c) {
  return c.arch == "custom" ? c.layers : preset_layers(c.arch, c.width_divisor);
}

InputShape resolve_input(const TrainConfig& c) { return c.arch == "custom" ? c.input : preset_input(c.arch); }

std::string config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset;
  j["data_dir"] = c.data_dir.string();
  j["arch"] = c.arch;
  if (c.arch == "custom") {
    j["layers"] = nlohmann::json::array();
    for (const auto& l : c.layers) {
      j["layers"].push_back({{"kind", std::string(to_string(l.kind))}, {"filters", l.filters}, {"kernel", l.kernel},
                             {"units", l.units}});
    }
    j["input"] = {c.input.channels, c.input.height, c.input.width};
  }
  j["width_divisor"] = c.width_divisor;
  j["variant"] = std::string(to_string(c.variant));
  j["train_size"] = c.train_size;
  j["val_size"] = c.val_size;
  j["epochs_stage1"] = c.epochs_stage1;
  j["epochs_stage2"] = c.epochs_stage2;
  j["batch_size"] = c.batch_size;
  j["seeds"] = c.seeds;
  j["rho"] = c.optimizer.rho;
  j["epsilon"] = c.optimizer.epsilon;
  j["learning_rate"] = c.optimizer.learning_rate;
  j["activation"] = std::string(to_string(c.activation));
  j["head_half_width"] = c.head_half_width;
  j["gcn_init_noise"] = c.gcn_init_noise;
  j["freeze_base"] = c.freeze_base;
  j["edge_weighting"] = c.edge_weighting == EdgeWeighting::ratio ? "ratio" : "count";
  j["graph_threshold"] = c.graph_threshold;
  j["track_validation"] = c.track_validation;
  j["precision"] = c.precision;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir.string();
  j["table_sizes"] = c.table_sizes;
  j["table_variants"] = nlohmann::json::array();
  for (auto v : c.table_variants) j["table_variants"].push_back(std::string(to_string(v)));
  return j.dump(2);
}

}  // namespace pkgcn
