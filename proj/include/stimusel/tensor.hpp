#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stimusel {

/// Dense row-major tensor of 32-bit floats. The on-disk STVT format is
/// little-endian and single-dtype; see read_tensor/write_tensor.
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::uint64_t> d, std::vector<float> values);

  static Tensor zeros(std::vector<std::uint64_t> dims);

  std::size_t numel() const;
  std::size_t rank() const { return dims.size(); }

  float& at2(std::size_t i, std::size_t j);
  float at2(std::size_t i, std::size_t j) const;
  float& at3(std::size_t i, std::size_t j, std::size_t k);
  float at3(std::size_t i, std::size_t j, std::size_t k) const;

  /// Throws Error if dims are empty, any extent is zero, or
  /// product(dims) != data.size().
  void validate() const;
};

/// Bitwise equality: same dims and bit-identical payload (NaN-safe).
bool operator==(const Tensor& a, const Tensor& b);
inline bool operator!=(const Tensor& a, const Tensor& b) { return !(a == b); }

/// Named tensor container, serialized as STVB.
struct WeightBundle {
  std::map<std::string, Tensor> entries;

  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
};

// STVT file: "STVT" | version u8=1 | dtype u8=0 (f32) | ndim u8 | reserved u8=0
//            | ndim x u64 LE extents | f32 LE row-major payload.
Tensor read_tensor(const std::filesystem::path& path);
void write_tensor(const Tensor& t, const std::filesystem::path& path);

// STVB file: "STVB" | version u8=1 | count u32 LE
//            | count x (name_len u16 LE, UTF-8 name, embedded STVT record).
WeightBundle read_bundle(const std::filesystem::path& path);
void write_bundle(const WeightBundle& bundle, const std::filesystem::path& path);

// In-memory encodings, used by the file paths above and directly by tests.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::uint8_t* bytes, std::size_t size, std::size_t* consumed = nullptr);

}  // namespace stimusel
