#include "stimusel/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "stimusel/error.hpp"

namespace stimusel {

namespace {

constexpr char kTensorMagic[4] = {'S', 'T', 'V', 'T'};
constexpr char kBundleMagic[4] = {'S', 'T', 'V', 'B'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint16_t get_u16_le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (static_cast<std::uint16_t>(p[1]) << 8));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

Tensor::Tensor(std::vector<std::uint64_t> d, std::vector<float> values)
    : dims(std::move(d)), data(std::move(values)) {
  validate();
}

Tensor Tensor::zeros(std::vector<std::uint64_t> dims) {
  Tensor t;
  t.dims = std::move(dims);
  t.data.assign(t.numel(), 0.0f);
  t.validate();
  return t;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::uint64_t ext : dims) {
    if (ext == 0) return 0;
    if (n > std::numeric_limits<std::size_t>::max() / ext)
      throw Error("tensor extent product overflows size_t");
    n *= static_cast<std::size_t>(ext);
  }
  return dims.empty() ? 0 : n;
}

float& Tensor::at2(std::size_t i, std::size_t j) {
  return data[i * static_cast<std::size_t>(dims[1]) + j];
}
float Tensor::at2(std::size_t i, std::size_t j) const {
  return data[i * static_cast<std::size_t>(dims[1]) + j];
}
float& Tensor::at3(std::size_t i, std::size_t j, std::size_t k) {
  const auto d1 = static_cast<std::size_t>(dims[1]);
  const auto d2 = static_cast<std::size_t>(dims[2]);
  return data[(i * d1 + j) * d2 + k];
}
float Tensor::at3(std::size_t i, std::size_t j, std::size_t k) const {
  const auto d1 = static_cast<std::size_t>(dims[1]);
  const auto d2 = static_cast<std::size_t>(dims[2]);
  return data[(i * d1 + j) * d2 + k];
}

void Tensor::validate() const {
  if (dims.empty()) throw Error("tensor must have at least one dimension");
  for (std::uint64_t ext : dims)
    if (ext == 0) throw Error("tensor extents must be >= 1");
  if (numel() != data.size())
    throw Error("tensor payload size " + std::to_string(data.size()) +
                " does not match extent product " + std::to_string(numel()));
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.dims != b.dims || a.data.size() != b.data.size()) return false;
  if (a.data.empty()) return true;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

const Tensor& WeightBundle::get(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw Error("weight bundle has no entry named '" + name + "'");
  return it->second;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  t.validate();
  if (t.dims.size() > 255) throw Error("tensor rank exceeds format limit of 255");
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * t.dims.size() + 4 * t.data.size());
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  out.push_back(kVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  out.push_back(0);  // reserved
  for (std::uint64_t ext : t.dims) put_u64_le(out, ext);
  for (float v : t.data) put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(const std::uint8_t* bytes, std::size_t size, std::size_t* consumed) {
  if (size < 8) throw Error("STVT record truncated: header incomplete");
  if (std::memcmp(bytes, kTensorMagic, 4) != 0) throw Error("bad STVT magic");
  if (bytes[4] != kVersion)
    throw Error("unsupported STVT version " + std::to_string(int(bytes[4])));
  if (bytes[5] != kDtypeF32)
    throw Error("unsupported STVT dtype code " + std::to_string(int(bytes[5])) + " (only f32 supported)");
  const std::size_t ndim = bytes[6];
  if (ndim == 0) throw Error("STVT record has zero dimensions");
  const std::size_t header = 8 + 8 * ndim;
  if (size < header) throw Error("STVT record truncated: extent table incomplete");

  Tensor t;
  t.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    t.dims[i] = get_u64_le(bytes + 8 + 8 * i);
    if (t.dims[i] == 0) throw Error("STVT extent must be >= 1");
  }
  const std::size_t count = t.numel();
  if (count > (std::numeric_limits<std::size_t>::max() - header) / 4)
    throw Error("STVT payload size overflows");
  if (size < header + 4 * count) throw Error("STVT record truncated: payload incomplete");

  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    t.data[i] = std::bit_cast<float>(get_u32_le(bytes + header + 4 * i));
  if (consumed) *consumed = header + 4 * count;
  return t;
}

Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t consumed = 0;
  Tensor t;
  try {
    t = decode_tensor(bytes.data(), bytes.size(), &consumed);
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " in " + path.string());
  }
  if (consumed != bytes.size())
    throw Error("trailing bytes after STVT payload in " + path.string());
  return t;
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensor(t));
}

WeightBundle read_bundle(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 9) throw Error("STVB file truncated: " + path.string());
  if (std::memcmp(bytes.data(), kBundleMagic, 4) != 0)
    throw Error("bad STVB magic in " + path.string());
  if (bytes[4] != kVersion)
    throw Error("unsupported STVB version in " + path.string());
  const std::uint32_t count = get_u32_le(bytes.data() + 5);

  WeightBundle bundle;
  std::size_t pos = 9;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (bytes.size() - pos < 2) throw Error("STVB entry header truncated in " + path.string());
    const std::uint16_t name_len = get_u16_le(bytes.data() + pos);
    pos += 2;
    if (name_len == 0) throw Error("STVB entry has empty name in " + path.string());
    if (bytes.size() - pos < name_len) throw Error("STVB entry name truncated in " + path.string());
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    if (bundle.contains(name))
      throw Error("duplicate STVB entry name '" + name + "' in " + path.string());
    std::size_t consumed = 0;
    try {
      bundle.entries.emplace(std::move(name), decode_tensor(bytes.data() + pos, bytes.size() - pos, &consumed));
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " in " + path.string());
    }
    pos += consumed;
  }
  if (pos != bytes.size()) throw Error("trailing bytes after STVB entries in " + path.string());
  return bundle;
}

void write_bundle(const WeightBundle& bundle, const std::filesystem::path& path) {
  if (bundle.entries.size() > std::numeric_limits<std::uint32_t>::max())
    throw Error("bundle entry count exceeds format limit");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kBundleMagic, kBundleMagic + 4);
  out.push_back(kVersion);
  put_u32_le(out, static_cast<std::uint32_t>(bundle.entries.size()));
  for (const auto& [name, tensor] : bundle.entries) {
    if (name.empty()) throw Error("bundle entry names must be nonempty");
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw Error("bundle entry name too long: " + name);
    put_u16_le(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const auto rec = encode_tensor(tensor);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  write_file_bytes(path, out);
}

}  // namespace stimusel
