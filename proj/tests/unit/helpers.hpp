// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kinmerge/tensor_store.hpp"

namespace testing {

using kinmerge::ElementType;
using kinmerge::TensorMap;
using kinmerge::TensorMapBuilder;

/// One f32 tensor per entry, each shaped as a flat vector.
inline TensorMap make_map(const std::map<std::string, std::vector<float>>& tensors) {
  TensorMapBuilder b;
  for (const auto& [name, values] : tensors) b.add(name, ElementType::f32, {values.size()}, values);
  return std::move(b).build();
}

inline TensorMap make_vector(const std::vector<float>& values) { return make_map({{"w", values}}); }

inline std::vector<float> random_values(std::size_t n, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Two tensors of a small model: "a.weight" [rows, cols] and "b.bias" [cols].
inline TensorMap random_model(std::uint64_t seed, std::size_t rows = 7, std::size_t cols = 5, float scale = 1.0f) {
  TensorMapBuilder b;
  b.add("a.weight", ElementType::f32, {rows, cols}, random_values(rows * cols, seed, scale));
  b.add("b.bias", ElementType::f32, {cols}, random_values(cols, seed + 1000, scale));
  return std::move(b).build();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kinmerge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline const std::filesystem::path kFixtures = KINMERGE_FIXTURE_DIR;
inline const std::filesystem::path kScripts = KINMERGE_SCRIPT_DIR;

}  // namespace testing
