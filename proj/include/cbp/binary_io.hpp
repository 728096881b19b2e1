#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace cbp {

// Shared binary convention for weights, features and activation caches:
// contiguous 32-bit IEEE-754 reals, little-endian, no header.

void write_f32_le(std::ostream& out, std::span<const float> values);
void read_f32_le(std::istream& in, std::span<float> values);

void write_u64_le(std::ostream& out, std::uint64_t value);
std::uint64_t read_u64_le(std::istream& in);

std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);

/// Incremental 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);
  void update_u64(std::uint64_t value);
  void update_f32(std::span<const float> values);
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t value);

}  // namespace cbp
