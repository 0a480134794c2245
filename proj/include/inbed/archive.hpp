#pragma once

// Versioned container of named, typed n-dimensional arrays plus a JSON
// metadata record. Used for datasets, body templates, and checkpoints.
//
// On-disk layout (little-endian):
//   magic "INBDARC\0" | u32 container_version | u64 meta_len | meta JSON bytes
//   | u32 n_arrays | n_arrays x { u32 name_len | name | u8 dtype | u32 ndim
//   | ndim x i64 dim | u64 n_bytes | payload }
// Arrays are written in lexicographic name order so identical content always
// produces identical bytes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace inbed::io {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2, u8 = 3 };

std::size_t dtype_size(DType d);
const char* dtype_name(DType d);

// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct NamedArray {
  DType dtype = DType::f32;
  std::vector<std::int64_t> shape;
  std::vector<std::byte> bytes;

  std::int64_t numel() const;
};

class Archive {
 public:
  static constexpr std::uint32_t kContainerVersion = 1;

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);
  void put_f64(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values);
  void put_i32(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int32_t> values);
  void put_u8(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> values);

  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  const NamedArray& at(const std::string& name) const;
  const std::map<std::string, NamedArray>& arrays() const { return arrays_; }

  // Typed getters check dtype and, when `expected_shape` is non-empty, the
  // exact shape (-1 entries match any extent).
  std::vector<float> get_f32(const std::string& name, const std::vector<std::int64_t>& expected_shape = {}) const;
  std::vector<double> get_f64(const std::string& name, const std::vector<std::int64_t>& expected_shape = {}) const;
  std::vector<std::int32_t> get_i32(const std::string& name, const std::vector<std::int64_t>& expected_shape = {}) const;
  std::vector<std::uint8_t> get_u8(const std::string& name, const std::vector<std::int64_t>& expected_shape = {}) const;

  std::vector<std::byte> serialize() const;
  static Archive deserialize(std::span<const std::byte> bytes);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  void put_raw(const std::string& name, DType dtype, std::vector<std::int64_t> shape, const void* data,
               std::size_t n_elems);
  const NamedArray& checked(const std::string& name, DType dtype, const std::vector<std::int64_t>& expected) const;

  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, NamedArray> arrays_;
};

// Stamp/verify a (format, version) pair inside an archive's metadata.
void set_format(Archive& ar, const std::string& format, int version);
void require_format(const Archive& ar, const std::string& format, int version);

// FNV-1a over a byte range; used for manifests and config digests.
std::uint64_t fnv1a(std::span<const std::byte> bytes);
std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t value);

}  // namespace inbed::io
