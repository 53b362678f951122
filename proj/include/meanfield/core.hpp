#ifndef MEANFIELD_CORE_HPP
#define MEANFIELD_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace meanfield {

// Error hierarchy. Every error raised by the library derives from Error so
// the CLI can map families to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedKernelError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  // Prefixes `context` to an existing error, keeping its step.
  NumericalError(const std::string& context, const NumericalError& inner)
      : Error(context + ": " + inner.what()), step_(inner.step()) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

// ---------------------------------------------------------------------------
// Small vector helpers on contiguous coordinates.

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool lex_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Pairwise (cascade) summation. Fixed association order, so the result only
// depends on the order of `values`.
inline double pairwise_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

struct MeanAndError {
  double value = 0.0;
  double std_error = 0.0;
};

// Sample mean and standard error of the mean, reduced in fixed order.
inline MeanAndError mean_and_stderr(std::span<const double> values) {
  MeanAndError r;
  const std::size_t n = values.size();
  if (n == 0) return r;
  r.value = pairwise_sum(values) / static_cast<double>(n);
  if (n < 2) return r;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = values[i] - r.value;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
  r.std_error = std::sqrt(var / static_cast<double>(n));
  return r;
}

// ---------------------------------------------------------------------------
// Seeding. All randomness is derived from one user seed through SplitMix64
// mixing of (seed, stream, index); each derived seed feeds a std::mt19937_64.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Named streams keep unrelated consumers of one seed decorrelated.
enum class Stream : std::uint64_t {
  kSamples = 1,
  kMembers = 2,
  kSubsample = 3,
  kTestFunctions = 4,
  kInjections = 5,
  kInstances = 6,
  kTrials = 7,
  kDefect = 8,
};

inline std::uint64_t child_seed(std::uint64_t seed, Stream stream,
                                std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h + index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return Rng(child_seed(seed, stream, index));
}

// ---------------------------------------------------------------------------
// Parallelism. MEANFIELD_THREADS caps the worker count; results are always
// written by index so the outcome does not depend on scheduling.

inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MEANFIELD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) hw = static_cast<unsigned>(v);
  }
  return hw;
}

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::size_t first_index = count;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          // Report the lowest failing index for reproducible messages.
          if (i < first_index) {
            first_index = i;
            first_error = std::current_exception();
          }
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace meanfield

#endif  // MEANFIELD_CORE_HPP
