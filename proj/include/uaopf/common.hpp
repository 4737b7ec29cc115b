#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace uaopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Index = std::int64_t;

/// Raised when a case/dataset file cannot be parsed.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when parsed content violates a structural invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic random streams.
//
// All sampling in the toolkit goes through SplitMix64-based streams so that
// output is reproducible bit-for-bit across runs and platforms.  Substreams
// derived with `fork` are independent of consumption order in the parent,
// which keeps parallel profile generation order-deterministic.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi].
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Independent substream; `tag` distinguishes siblings.
  RandomStream fork(std::uint64_t tag) const {
    std::uint64_t s = state_;
    std::uint64_t a = splitmix64(s);
    std::uint64_t t = tag;
    std::uint64_t b = splitmix64(t);
    std::uint64_t mixed = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return RandomStream(mixed);
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a, 64-bit) for dataset/surrogate provenance fields.
// ---------------------------------------------------------------------------

class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update_f64(double v) { update(&v, sizeof(v)); }
  void update_i64(std::int64_t v) { update(&v, sizeof(v)); }

  std::uint64_t value() const { return hash_; }
  std::string hex() const;

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_file_bytes(const std::string& path);

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

double parse_double(std::string_view text);

}  // namespace uaopf
