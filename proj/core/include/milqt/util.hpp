#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace milqt {

// Shortest decimal string that parses back to exactly the same double.
std::string fmt_double(double v);

// Strict double parse of the whole string; throws ParseError otherwise.
double parse_double(std::string_view s);

// Strict non-negative integer parse; throws ParseError otherwise.
std::size_t parse_size(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_ws(std::string_view s);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// FNV-1a 64-bit, used for input digests in run manifests and checkpoints.
std::uint64_t fnv1a(std::string_view bytes);
std::string fnv1a_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Deterministic pseudo random stream (splitmix64). Not cryptographic; the
// point is identical output on every platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform in [0, n); n must be positive.
  std::size_t uniform_int(std::size_t n);
  // -1.0 or +1.0 with equal probability.
  double pick_sign();
  // Independent child stream; deterministic in (seed, stream).
  Rng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace milqt
