#include "pkgcn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pkgcn/data.hpp"
#include "pkgcn/errors.hpp"

namespace pkgcn {

std::string_view to_string(ComponentTag tag) {
  switch (tag) {
    case ComponentTag::base: return "base";
    case ComponentTag::pkgcn_v1: return "pkgcn-v1";
    case ComponentTag::pkgcn_v2: return "pkgcn-v2";
  }
  return "?";
}

namespace {

constexpr char kMagic[4] = {'P', 'K', 'G', 'C'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t{in_[pos_ + k]} << (8 * k);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint: truncated file");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<std::uint8_t> encode_values(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < out.size(); i += sizeof(T)) std::reverse(out.begin() + i, out.begin() + i + sizeof(T));
  }
  return out;
}

template <typename S>
std::vector<S> decode_values(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> tmp(bytes.begin(), bytes.end());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < tmp.size(); i += sizeof(S)) std::reverse(tmp.begin() + i, tmp.begin() + i + sizeof(S));
  }
  std::vector<S> out(tmp.size() / sizeof(S));
  std::memcpy(out.data(), tmp.data(), tmp.size());
  return out;
}

template <typename T>
CheckpointEntry entry(const std::string& name, const Tensor<T>& t) {
  return {name, t.shape(), encode_values<T>(t.data())};
}

// Graph matrices keep full precision whatever the parameter width.
std::uint32_t entry_width(const std::string& name, std::uint32_t scalar_bytes) {
  return name.starts_with("graph.") ? 8 : scalar_bytes;
}

template <typename T>
Tensor<T> entry_tensor(const CheckpointEntry& e, std::uint32_t scalar_bytes) {
  std::vector<T> values;
  if (entry_width(e.name, scalar_bytes) == 4) {
    auto v = decode_values<float>(e.payload);
    values.assign(v.begin(), v.end());
  } else {
    auto v = decode_values<double>(e.payload);
    values.assign(v.begin(), v.end());
  }
  return Tensor<T>(e.shape, std::move(values));
}

nlohmann::json model_metadata(const std::vector<LayerSpec>& layers, InputShape input) {
  nlohmann::json j;
  j["input"] = {input.channels, input.height, input.width};
  j["layers"] = nlohmann::json::array();
  for (const auto& l : layers) {
    nlohmann::json lj{{"kind", std::string(to_string(l.kind))}};
    if (l.kind == LayerKind::conv) {
      lj["filters"] = l.filters;
      lj["kernel"] = l.kernel;
    } else if (l.kind == LayerKind::dense) {
      lj["units"] = l.units;
    }
    j["layers"].push_back(lj);
  }
  return j;
}

template <typename T>
Model<T> model_from_metadata(const nlohmann::json& j) {
  std::vector<LayerSpec> layers;
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
    l.filters = lj.value("filters", std::size_t{0});
    l.kernel = lj.value("kernel", std::size_t{0});
    l.units = lj.value("units", std::size_t{0});
    layers.push_back(l);
  }
  const auto in = j.at("input").get<std::vector<std::size_t>>();
  if (in.size() != 3) throw FormatError("checkpoint: input shape must have 3 entries");
  return Model<T>::build(std::move(layers), {in[0], in[1], in[2]}, 0);
}

template <typename T>
void restore_params(Model<T>& model, const std::vector<Tensor<T>>& tensors, const std::vector<std::string>& names) {
  for (auto& p : model.params()) {
    auto it = std::find(names.begin(), names.end(), p.name);
    if (it == names.end()) throw FormatError("checkpoint: missing parameter " + p.name);
    const auto& t = tensors[static_cast<std::size_t>(it - names.begin())];
    if (t.shape() != p.value.shape()) throw FormatError("checkpoint: parameter " + p.name + " has wrong shape");
    p.value = t;
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(file.tag));
  w.u32(file.scalar_bytes);
  w.u32(static_cast<std::uint32_t>(file.metadata.size()));
  w.bytes(file.metadata.data(), file.metadata.size());
  w.u32(static_cast<std::uint32_t>(file.entries.size()));
  for (const auto& e : file.entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    w.bytes(e.payload.data(), e.payload.size());
  }
  return w.take();
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointFile f;
  const auto tag = r.u32();
  if (tag > 2) throw FormatError("checkpoint: unknown component tag " + std::to_string(tag));
  f.tag = static_cast<ComponentTag>(tag);
  f.scalar_bytes = r.u32();
  if (f.scalar_bytes != 4 && f.scalar_bytes != 8) {
    throw FormatError("checkpoint: unsupported scalar width " + std::to_string(f.scalar_bytes));
  }
  auto meta = r.bytes(r.u32());
  f.metadata.assign(meta.begin(), meta.end());
  const auto count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    auto name = r.bytes(r.u32());
    e.name.assign(name.begin(), name.end());
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: bad rank for " + e.name);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(r.u32());
      if (e.shape.back() == 0) throw FormatError("checkpoint: zero dimension in " + e.name);
      numel *= e.shape.back();
    }
    auto payload = r.bytes(numel * entry_width(e.name, f.scalar_bytes));
    e.payload.assign(payload.begin(), payload.end());
    f.entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return f;
}

template <typename T>
CheckpointFile make_checkpoint(const Model<T>& model) {
  CheckpointFile f;
  f.tag = ComponentTag::base;
  f.scalar_bytes = sizeof(T);
  f.metadata = model_metadata(model.layers(), model.input_shape()).dump();
  for (const auto& p : model.params()) f.entries.push_back(entry(p.name, p.value));
  return f;
}

template <typename T>
CheckpointFile make_checkpoint(const PkGcnModel<T>& model) {
  CheckpointFile f = make_checkpoint(model.base);
  f.tag = model.variant == HeadVariant::v1 ? ComponentTag::pkgcn_v1 : ComponentTag::pkgcn_v2;
  auto meta = model_metadata(model.base.layers(), model.base.input_shape());
  meta["activation"] = std::string(to_string(model.gcn.activation));
  meta["head_half_width"] = model.variant == HeadVariant::v2 ? model.head.half_width() : 0;
  f.metadata = meta.dump();
  const std::size_t m = model.similarity.m;
  Tensor<double> sim({m, m}, model.similarity.weights);
  f.entries.push_back(entry("graph.similarity", sim));
  f.entries.push_back(entry("graph.adjacency", model.adjacency.template cast<double>()));
  f.entries.push_back(entry("gcn.weight", model.gcn.weight));
  if (model.variant == HeadVariant::v2) {
    f.entries.push_back(entry("head.weight", model.head.weight));
    f.entries.push_back(entry("head.bias", model.head.bias));
  }
  return f;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  write_bytes(path, encode_checkpoint(make_checkpoint(model)));
}

template <typename T>
void save_checkpoint(const PkGcnModel<T>& model, const std::filesystem::path& path) {
  write_bytes(path, encode_checkpoint(make_checkpoint(model)));
}

template <typename T>
LoadedCheckpoint<T> restore_checkpoint(const CheckpointFile& file) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(file.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  std::vector<Tensor<T>> tensors;
  std::vector<std::string> names;
  for (const auto& e : file.entries) {
    tensors.push_back(entry_tensor<T>(e, file.scalar_bytes));
    names.push_back(e.name);
  }
  auto get = [&](const std::string& name) -> const Tensor<T>& {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw FormatError("checkpoint: missing entry " + name);
    return tensors[static_cast<std::size_t>(it - names.begin())];
  };

  LoadedCheckpoint<T> out;
  out.tag = file.tag;
  try {
    Model<T> base = model_from_metadata<T>(meta);
    restore_params(base, tensors, names);
    if (file.tag == ComponentTag::base) {
      out.base = std::move(base);
      return out;
    }
    PkGcnModel<T> pk;
    pk.base = std::move(base);
    pk.variant = file.tag == ComponentTag::pkgcn_v1 ? HeadVariant::v1 : HeadVariant::v2;
    pk.gcn.activation = parse_activation(meta.at("activation").get<std::string>());
    pk.gcn.weight = get("gcn.weight");
    pk.adjacency = get("graph.adjacency");
    const auto sim_entry = std::find_if(file.entries.begin(), file.entries.end(),
                                        [](const CheckpointEntry& e) { return e.name == "graph.similarity"; });
    if (sim_entry == file.entries.end()) throw FormatError("checkpoint: missing entry graph.similarity");
    const Tensor<double> sim = entry_tensor<double>(*sim_entry, file.scalar_bytes);
    const std::size_t m = pk.base.num_classes();
    if (sim.shape() != Shape{m, m} || pk.adjacency.shape() != Shape{m, m}) {
      throw FormatError("checkpoint: graph matrices do not match class count");
    }
    pk.similarity = {m, std::vector<double>(sim.values().begin(), sim.values().end())};
    if (pk.variant == HeadVariant::v2) {
      pk.head.weight = get("head.weight");
      pk.head.bias = get("head.bias");
    }
    out.pkgcn = std::move(pk);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  return out;
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return restore_checkpoint<T>(decode_checkpoint(read_file_bytes(path)));
}

#define PKGCN_INSTANTIATE_CKPT(T)                                                  \
  template CheckpointFile make_checkpoint(const Model<T>&);                       \
  template CheckpointFile make_checkpoint(const PkGcnModel<T>&);                  \
  template void save_checkpoint(const Model<T>&, const std::filesystem::path&);   \
  template void save_checkpoint(const PkGcnModel<T>&, const std::filesystem::path&); \
  template LoadedCheckpoint<T> restore_checkpoint(const CheckpointFile&);         \
  template LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path&);

PKGCN_INSTANTIATE_CKPT(float)
PKGCN_INSTANTIATE_CKPT(double)

}  // namespace pkgcn
