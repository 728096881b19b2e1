#include "cbp/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cbp/error.hpp"

namespace cbp {
namespace {

constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
constexpr std::size_t kChunk = 1 << 16;

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_f32_le(std::ostream& out, std::span<const float> values) {
  std::vector<std::uint32_t> buf;
  buf.reserve(std::min(values.size(), kChunk));
  for (std::size_t off = 0; off < values.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, values.size() - off);
    buf.resize(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = to_le(std::bit_cast<std::uint32_t>(values[off + i]));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing binary data");
}

void read_f32_le(std::istream& in, std::span<float> values) {
  std::vector<std::uint32_t> buf;
  for (std::size_t off = 0; off < values.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, values.size() - off);
    buf.resize(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
    if (static_cast<std::size_t>(in.gcount()) != n * 4) {
      throw Error(ErrorKind::Io, "unexpected end of binary data");
    }
    for (std::size_t i = 0; i < n; ++i) values[off + i] = std::bit_cast<float>(to_le(buf[i]));
  }
}

void write_u64_le(std::ostream& out, std::uint64_t value) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), 8);
  if (!out) throw Error(ErrorKind::Io, "failed writing binary data");
}

std::uint64_t read_u64_le(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (in.gcount() != 8) throw Error(ErrorKind::Io, "unexpected end of binary data");
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return value;
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const auto bytes = std::filesystem::file_size(path);
  if (bytes % 4 != 0) {
    throw Error(ErrorKind::Validation,
                path.string() + ": size " + std::to_string(bytes) + " is not a multiple of 4");
  }
  std::vector<float> values(bytes / 4);
  read_f32_le(in, values);
  return values;
}

void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_f32_le(out, values);
}

void Fnv1a::update(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = state_;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  state_ = h;
}

void Fnv1a::update(std::string_view text) {
  update_u64(text.size());
  update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void Fnv1a::update_u64(std::uint64_t value) {
  std::array<std::uint8_t, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>((value >> (8 * i)) & 0xff);
  update(bytes);
}

void Fnv1a::update_f32(std::span<const float> values) {
  std::uint64_t h = state_;
  for (float v : values) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= kFnvPrime;
    }
  }
  state_ = h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

}  // namespace cbp
