#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sei {

// Bad shapes, bad hyperparameters, mismatched architectures.
class config_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed files; message carries a byte offset where known.
class parse_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid pool indices or budgets in the query strategies.
class selection_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values, zero-vector normalization and the like.
class numeric_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incomplete or inconsistent run directories.
class report_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void log_warn(const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; }

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Independent child stream for (seed, label, index); used so that e.g. the
// noise draws of record 17 never depend on how many payload samples record
// 16 consumed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
  std::uint64_t h = detail::splitmix64(seed ^ detail::fnv1a(label));
  return detail::splitmix64(h ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// mt19937_64 with distributions implemented by hand so streams are
// bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; two uniform draws per value, no cached spare.
  double gaussian() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  double gaussian(double mean, double std) { return mean + std * gaussian(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw config_error("Rng::below: n must be positive");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = next_u64();
    while (r >= limit) r = next_u64();
    return r % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
};

template <typename T>
std::string join(const std::vector<T>& v, const char* sep = ",") {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

}  // namespace sei
