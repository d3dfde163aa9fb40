// SPDX-License-Identifier: Apache-2.0
#include "kinmerge/tensor_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "kinmerge/error.hpp"
#include "kinmerge/simd/kernels.hpp"

static_assert(std::endian::native == std::endian::little,
              "the container format is little-endian; big-endian hosts are not supported");

namespace kinmerge {

namespace detail {

class Storage {
 public:
  virtual ~Storage() = default;
  virtual std::span<const std::byte> data() const noexcept = 0;
};

namespace {

class BufferStorage final : public Storage {
 public:
  explicit BufferStorage(std::vector<std::byte> bytes) : bytes_(std::move(bytes)) {}
  std::span<const std::byte> data() const noexcept override { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

/// Read-only private mapping of the data region of a container file.
class MappedStorage final : public Storage {
 public:
  MappedStorage(void* base, std::size_t length, std::size_t data_offset, std::size_t data_length)
      : base_(base), length_(length), data_offset_(data_offset), data_length_(data_length) {}
  ~MappedStorage() override {
    if (base_ != nullptr) ::munmap(base_, length_);
  }
  MappedStorage(const MappedStorage&) = delete;
  MappedStorage& operator=(const MappedStorage&) = delete;

  std::span<const std::byte> data() const noexcept override {
    return {static_cast<const std::byte*>(base_) + data_offset_, data_length_};
  }

 private:
  void* base_;
  std::size_t length_;
  std::size_t data_offset_;
  std::size_t data_length_;
};

class EmptyStorage final : public Storage {
 public:
  std::span<const std::byte> data() const noexcept override { return {}; }
};

}  // namespace
}  // namespace detail

std::uint64_t TensorMeta::numel() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                         [](std::uint64_t a, std::uint64_t b) { return a * b; });
}

TensorMap::TensorMap() : storage_(std::make_shared<detail::EmptyStorage>()) {}

std::optional<std::size_t> TensorMap::find(std::string_view name) const {
  auto it = std::lower_bound(metas_.begin(), metas_.end(), name,
                             [](const TensorMeta& m, std::string_view n) { return m.name < n; });
  if (it == metas_.end() || it->name != name) return std::nullopt;
  return static_cast<std::size_t>(it - metas_.begin());
}

std::uint64_t TensorMap::parameter_count() const noexcept {
  std::uint64_t n = 0;
  for (const auto& m : metas_) n += m.numel();
  return n;
}

std::span<const std::byte> TensorMap::raw(std::size_t index) const {
  const TensorMeta& m = metas_.at(index);
  return storage_->data().subspan(m.byte_begin, m.byte_size());
}

void TensorMap::read(std::size_t index, std::uint64_t offset, std::span<float> out) const {
  const TensorMeta& m = metas_.at(index);
  if (offset + out.size() > m.numel()) {
    throw_data(fmt::format("read past the end of tensor '{}'", m.name));
  }
  const std::size_t es = element_size(m.element_type);
  const std::byte* src = raw(index).data() + offset * es;
  const auto& k = simd::kernels();
  switch (m.element_type) {
    case ElementType::f32:
      std::memcpy(out.data(), src, out.size() * sizeof(float));
      break;
    case ElementType::f16:
    case ElementType::bf16: {
      // the data region carries no alignment guarantee
      thread_local std::vector<std::uint16_t> staging;
      staging.resize(out.size());
      std::memcpy(staging.data(), src, out.size() * 2);
      if (m.element_type == ElementType::f16) {
        k.widen_f16(staging.data(), out.data(), out.size());
      } else {
        k.widen_bf16(staging.data(), out.data(), out.size());
      }
      break;
    }
  }
}

std::vector<float> TensorMap::read_all(std::size_t index) const {
  std::vector<float> v(meta(index).numel());
  read(index, 0, v);
  return v;
}

std::vector<float> TensorMap::flatten() const {
  std::vector<float> out;
  out.reserve(parameter_count());
  for (std::size_t i = 0; i < metas_.size(); ++i) {
    auto t = read_all(i);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

TensorMapBuilder& TensorMapBuilder::add(std::string name, ElementType type,
                                        std::vector<std::uint64_t> shape,
                                        std::span<const float> values) {
  TensorMeta m{std::move(name), type, std::move(shape), 0, 0};
  if (m.numel() != values.size()) {
    throw_data(fmt::format("tensor '{}': {} values for shape of {} elements", m.name,
                           values.size(), m.numel()));
  }
  m.byte_begin = data_.size();
  m.byte_end = m.byte_begin + values.size() * element_size(type);
  data_.resize(m.byte_end);
  std::byte* dst = data_.data() + m.byte_begin;
  const auto& k = simd::kernels();
  if (type == ElementType::f32) {
    std::memcpy(dst, values.data(), values.size() * sizeof(float));
  } else {
    std::vector<std::uint16_t> narrow(values.size());
    if (type == ElementType::f16) {
      k.narrow_f16(values.data(), narrow.data(), values.size());
    } else {
      k.narrow_bf16(values.data(), narrow.data(), values.size());
    }
    std::memcpy(dst, narrow.data(), narrow.size() * 2);
  }
  metas_.push_back(std::move(m));
  return *this;
}

TensorMapBuilder& TensorMapBuilder::add_raw(std::string name, ElementType type,
                                            std::vector<std::uint64_t> shape,
                                            std::span<const std::byte> bytes) {
  TensorMeta m{std::move(name), type, std::move(shape), 0, 0};
  if (m.numel() * element_size(type) != bytes.size()) {
    throw_data(fmt::format("tensor '{}': size mismatch", m.name));
  }
  m.byte_begin = data_.size();
  m.byte_end = m.byte_begin + bytes.size();
  data_.insert(data_.end(), bytes.begin(), bytes.end());
  metas_.push_back(std::move(m));
  return *this;
}

TensorMapBuilder& TensorMapBuilder::set_metadata(std::string key, std::string value) {
  metadata_[std::move(key)] = std::move(value);
  return *this;
}

TensorMap TensorMapBuilder::build() && {
  std::sort(metas_.begin(), metas_.end(),
            [](const TensorMeta& a, const TensorMeta& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < metas_.size(); ++i) {
    if (metas_[i].name == metas_[i - 1].name) {
      throw_data(fmt::format("duplicate tensor name '{}'", metas_[i].name));
    }
  }
  TensorMap map;
  map.storage_ = std::make_shared<detail::BufferStorage>(std::move(data_));
  map.metas_ = std::move(metas_);
  map.metadata_ = std::move(metadata_);
  return map;
}

namespace {

struct FileHandle {
  int fd = -1;
  ~FileHandle() {
    if (fd >= 0) ::close(fd);
  }
};

std::uint64_t json_uint(const nlohmann::json& v, const std::string& what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw_data("malformed header: " + what + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::vector<TensorMeta> parse_header(const std::string& text,
                                     std::map<std::string, std::string>& metadata) {
  // nlohmann keeps the last of duplicated keys; catch duplicates while parsing.
  std::set<std::string> seen;
  std::string duplicate;
  const nlohmann::json::parser_callback_t cb = [&](int depth, nlohmann::json::parse_event_t event,
                                                   nlohmann::json& parsed) {
    if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
      const auto& k = parsed.get_ref<const std::string&>();
      if (!seen.insert(k).second && duplicate.empty()) duplicate = k;
    }
    return true;
  };
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text, cb);
  } catch (const nlohmann::json::exception& e) {
    throw_data(std::string("malformed header: ") + e.what());
  }
  if (!duplicate.empty()) throw_data(fmt::format("malformed header: duplicate tensor name '{}'", duplicate));
  if (!header.is_object()) throw_data("malformed header: top level must be an object");

  std::vector<TensorMeta> metas;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (!entry.is_object()) throw_data("malformed header: __metadata__ must be an object");
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string()) throw_data("malformed header: __metadata__ values must be strings");
        metadata[k] = v.get<std::string>();
      }
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      throw_data(fmt::format("malformed header: entry '{}' needs dtype, shape and data_offsets", name));
    }
    const auto& dt = entry.at("dtype");
    if (!dt.is_string()) throw_data(fmt::format("malformed header: dtype of '{}'", name));
    const auto type = parse_element_type(dt.get<std::string>());
    if (!type) {
      throw_data(fmt::format("unsupported element type '{}' for tensor '{}'", dt.get<std::string>(), name));
    }
    const auto& shape = entry.at("shape");
    const auto& offs = entry.at("data_offsets");
    if (!shape.is_array()) throw_data(fmt::format("malformed header: shape of '{}'", name));
    if (!offs.is_array() || offs.size() != 2) {
      throw_data(fmt::format("malformed header: data_offsets of '{}'", name));
    }
    TensorMeta m;
    m.name = name;
    m.element_type = *type;
    for (const auto& d : shape) m.shape.push_back(json_uint(d, "shape of '" + name + "'"));
    m.byte_begin = json_uint(offs[0], "data_offsets of '" + name + "'");
    m.byte_end = json_uint(offs[1], "data_offsets of '" + name + "'");
    if (m.byte_end < m.byte_begin) throw_data(fmt::format("malformed header: reversed offsets for '{}'", name));
    if (m.numel() * element_size(m.element_type) != m.byte_size()) {
      throw_data(fmt::format("size mismatch for tensor '{}': shape needs {} bytes, offsets span {}",
                             name, m.numel() * element_size(m.element_type), m.byte_size()));
    }
    metas.push_back(std::move(m));
  }
  return metas;
}

void check_layout(const std::vector<TensorMeta>& metas, std::uint64_t data_length) {
  std::vector<const TensorMeta*> by_offset;
  for (const auto& m : metas) by_offset.push_back(&m);
  std::sort(by_offset.begin(), by_offset.end(), [](const TensorMeta* a, const TensorMeta* b) {
    return std::pair(a->byte_begin, a->byte_end) < std::pair(b->byte_begin, b->byte_end);
  });
  std::uint64_t prev_end = 0;
  const TensorMeta* prev = nullptr;
  for (const TensorMeta* m : by_offset) {
    if (m->byte_size() == 0) continue;
    if (prev != nullptr && m->byte_begin < prev_end) {
      throw_data(fmt::format("overlapping tensors '{}' and '{}'", prev->name, m->name));
    }
    if (m->byte_end > data_length) {
      throw_data(fmt::format("truncated file: tensor '{}' ends at byte {} of a {}-byte data region",
                             m->name, m->byte_end, data_length));
    }
    prev_end = m->byte_end;
    prev = m;
  }
}

}  // namespace

TensorMap load_tensor_map(const std::filesystem::path& path) {
  FileHandle fh;
  fh.fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fh.fd < 0) throw_io(fmt::format("cannot open '{}': {}", path.string(), std::strerror(errno)));
  struct stat st {};
  if (::fstat(fh.fd, &st) != 0) throw_io(fmt::format("cannot stat '{}'", path.string()));
  const auto file_size = static_cast<std::uint64_t>(st.st_size);
  if (file_size < 8) throw_data(fmt::format("truncated file '{}': no header length", path.string()));

  std::uint64_t header_len = 0;
  if (::pread(fh.fd, &header_len, 8, 0) != 8) throw_io(fmt::format("cannot read '{}'", path.string()));
  if (header_len > kMaxHeaderBytes) {
    throw_data(fmt::format("malformed header: {} bytes exceeds the {} byte limit", header_len, kMaxHeaderBytes));
  }
  if (header_len > file_size - 8) {
    throw_data(fmt::format("truncated file '{}': header of {} bytes", path.string(), header_len));
  }
  std::string text(header_len, '\0');
  if (header_len > 0 &&
      ::pread(fh.fd, text.data(), header_len, 8) != static_cast<ssize_t>(header_len)) {
    throw_io(fmt::format("cannot read header of '{}'", path.string()));
  }

  TensorMap map;
  map.metas_ = parse_header(text, map.metadata_);
  const std::uint64_t data_offset = 8 + header_len;
  const std::uint64_t data_length = file_size - data_offset;
  check_layout(map.metas_, data_length);
  std::sort(map.metas_.begin(), map.metas_.end(),
            [](const TensorMeta& a, const TensorMeta& b) { return a.name < b.name; });

  if (file_size > 0) {
    void* base = ::mmap(nullptr, file_size, PROT_READ, MAP_PRIVATE, fh.fd, 0);
    if (base == MAP_FAILED) throw_io(fmt::format("cannot map '{}': {}", path.string(), std::strerror(errno)));
    map.storage_ = std::make_shared<detail::MappedStorage>(base, file_size, data_offset, data_length);
  }
  map.source_ = path;
  return map;
}

void save_tensor_map(const TensorMap& map, const std::filesystem::path& path) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& m : map.metas()) {
    header[m.name] = {{"dtype", to_string(m.element_type)},
                      {"shape", m.shape},
                      {"data_offsets", {offset, offset + m.byte_size()}}};
    offset += m.byte_size();
  }
  if (!map.metadata().empty()) header["__metadata__"] = map.metadata();
  std::string text = header.dump();
  // pad so the data region starts 8-byte aligned
  text.append((8 - text.size() % 8) % 8, ' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io(fmt::format("cannot open '{}' for writing", path.string()));
  const std::uint64_t n = text.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto bytes = map.raw(i);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  out.flush();
  if (!out) throw_io(fmt::format("write to '{}' failed", path.string()));
}

void check_compatible(std::span<const TensorMap> maps) {
  if (maps.size() < 2) throw_data("compatibility check needs at least two models");
  const TensorMap& ref = maps[0];
  for (std::size_t j = 1; j < maps.size(); ++j) {
    const TensorMap& other = maps[j];
    const auto a = ref.metas();
    const auto b = other.metas();
    const std::size_t common = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < common; ++i) {
      if (a[i].name != b[i].name) {
        const bool ref_has_it = a[i].name < b[i].name;
        throw_data(fmt::format("incompatible models: tensor '{}' is missing from model #{}",
                               ref_has_it ? a[i].name : b[i].name, ref_has_it ? j : 0));
      }
      if (a[i].shape != b[i].shape) {
        throw_data(fmt::format("incompatible models: tensor '{}' has shape mismatch in model #{}",
                               a[i].name, j));
      }
      if (a[i].element_type != b[i].element_type) {
        throw_data(fmt::format("incompatible models: tensor '{}' has element type {} vs {} in model #{}",
                               a[i].name, to_string(a[i].element_type),
                               to_string(b[i].element_type), j));
      }
    }
    if (a.size() != b.size()) {
      const auto& longer = a.size() > b.size() ? a : b;
      throw_data(fmt::format("incompatible models: tensor '{}' is missing from model #{}",
                             longer[common].name, a.size() > b.size() ? j : 0));
    }
  }
}

void check_compatible(const TensorMap& a, const TensorMap& b) {
  const TensorMap maps[] = {a, b};
  check_compatible(maps);
}

}  // namespace kinmerge
