#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pkgcn/nn.hpp"
#include "pkgcn/pkgcn.hpp"

// Binary layout, all integers u32 little-endian:
//   "PKGC" | version | component tag | scalar bytes (4 or 8)
//   | metadata length | metadata (JSON: layers, input shape, head settings)
//   | entry count | per entry: name length, name, rank, dims..., payload
// Payloads are raw little-endian IEEE-754 values of the stated scalar width,
// except graph.* entries, which are always 8-byte doubles.

namespace pkgcn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ComponentTag : std::uint32_t { base = 0, pkgcn_v1 = 1, pkgcn_v2 = 2 };

std::string_view to_string(ComponentTag tag);

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<std::uint8_t> payload;
};

struct CheckpointFile {
  ComponentTag tag = ComponentTag::base;
  std::uint32_t scalar_bytes = 4;
  std::string metadata;
  std::vector<CheckpointEntry> entries;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file);
/// Throws FormatError on bad magic, unknown version or tag, truncation.
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
CheckpointFile make_checkpoint(const Model<T>& model);
template <typename T>
CheckpointFile make_checkpoint(const PkGcnModel<T>& model);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);
template <typename T>
void save_checkpoint(const PkGcnModel<T>& model, const std::filesystem::path& path);

template <typename T>
struct LoadedCheckpoint {
  ComponentTag tag = ComponentTag::base;
  std::optional<Model<T>> base;        // set for base checkpoints
  std::optional<PkGcnModel<T>> pkgcn;  // set for pkgcn checkpoints
};

/// Rebuilds the model described by the file. Payloads of the other scalar
/// width are converted.
template <typename T>
LoadedCheckpoint<T> restore_checkpoint(const CheckpointFile& file);

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pkgcn
