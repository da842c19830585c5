#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace radx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (files, shapes, missing columns).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Data that is valid in shape but numerically degenerate
/// (zero variance, empty candidate set, collinear voxels...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to converge or diverged.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Seeded generator with platform-independent derived distributions.
// std::normal_distribution and friends are implementation-defined, so
// everything below is built directly on the 64-bit Mersenne Twister.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw (Marsaglia polar method).
  double normal();

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a master seed and a stable label,
/// so that enabling or disabling one consumer never perturbs another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index = 0);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double prob);

/// Decimal text with 17 significant digits; round-trips any double.
std::string format_double(double value);

/// Upper tail of the standard normal, P(Z > z).
double normal_upper_tail(double z);

}  // namespace radx
