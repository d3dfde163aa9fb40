// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kinmerge/dtype.hpp"

namespace kinmerge {

/// Elements processed per streaming step. Operations that walk a model never
/// hold more than a few chunks of this size per input.
inline constexpr std::size_t kStreamChunk = std::size_t{1} << 16;

/// Upper bound on the JSON header of a container.
inline constexpr std::uint64_t kMaxHeaderBytes = 100ull * 1024 * 1024;

struct TensorMeta {
  std::string name;
  ElementType element_type = ElementType::f32;
  std::vector<std::uint64_t> shape;
  // Byte range relative to the start of the data region.
  std::uint64_t byte_begin = 0;
  std::uint64_t byte_end = 0;

  std::uint64_t numel() const noexcept;
  std::uint64_t byte_size() const noexcept { return byte_end - byte_begin; }

  friend bool operator==(const TensorMeta&, const TensorMeta&) = default;
};

namespace detail {
class Storage;
}

/// An immutable, named collection of dense tensors.
///
/// Tensors are ordered lexicographically by name; that order, with row-major
/// order inside each tensor, is the canonical flattening used everywhere a
/// model is viewed as one long vector. Reads widen to f32 on the fly, so a
/// map loaded from disk never materializes its values unless asked to.
/// Copies share the underlying storage and are safe to read concurrently.
class TensorMap {
 public:
  TensorMap();

  std::span<const TensorMeta> metas() const noexcept { return metas_; }
  std::size_t size() const noexcept { return metas_.size(); }
  const TensorMeta& meta(std::size_t index) const { return metas_.at(index); }
  std::optional<std::size_t> find(std::string_view name) const;

  /// Total element count over all tensors (the flattened dimension d).
  std::uint64_t parameter_count() const noexcept;

  /// Widens elements [offset, offset + out.size()) of tensor `index` into `out`.
  void read(std::size_t index, std::uint64_t offset, std::span<float> out) const;
  std::vector<float> read_all(std::size_t index) const;
  /// Whole model flattened in canonical order. Test and small-model helper.
  std::vector<float> flatten() const;

  std::span<const std::byte> raw(std::size_t index) const;

  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// File this map was loaded from; empty for maps built in memory.
  const std::filesystem::path& source_path() const noexcept { return source_; }

 private:
  friend class TensorMapBuilder;
  friend TensorMap load_tensor_map(const std::filesystem::path& path);

  std::shared_ptr<const detail::Storage> storage_;
  std::vector<TensorMeta> metas_;
  std::map<std::string, std::string> metadata_;
  std::filesystem::path source_;
};

/// Assembles a TensorMap in memory. Values given as f32 are narrowed to the
/// requested element type with round-to-nearest-even.
class TensorMapBuilder {
 public:
  TensorMapBuilder& add(std::string name, ElementType type, std::vector<std::uint64_t> shape,
                        std::span<const float> values);
  TensorMapBuilder& add_raw(std::string name, ElementType type, std::vector<std::uint64_t> shape,
                            std::span<const std::byte> bytes);
  TensorMapBuilder& set_metadata(std::string key, std::string value);

  /// Fails with a data error on duplicate names.
  TensorMap build() &&;

 private:
  std::vector<TensorMeta> metas_;
  std::vector<std::byte> data_;
  std::map<std::string, std::string> metadata_;
};

TensorMap load_tensor_map(const std::filesystem::path& path);
void save_tensor_map(const TensorMap& map, const std::filesystem::path& path);

/// Succeeds iff every map has the same tensor names, shapes and element
/// types. The error names the first offending tensor.
void check_compatible(std::span<const TensorMap> maps);
void check_compatible(const TensorMap& a, const TensorMap& b);

}  // namespace kinmerge
