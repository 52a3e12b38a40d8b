#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace grtp {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (bad rows, bad headers, broken JSON).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Data that parses but violates an invariant (duplicate frames, degenerate scenes).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Shape mismatch between an input and a parameter block or operation.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Numerical failure: NaN loss, non-PSD kernel, collapsed training.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration or command-line usage.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Missing or unreadable input files.
class IoError : public Error {
public:
  using Error::Error;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

/// Deterministic random stream. All sampling in the project goes through this
/// class so that results are bit-reproducible given a seed: uniforms come from
/// the top 53 bits of a mt19937_64 draw and normals from Box-Muller, never
/// from distribution objects whose output is implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // standard normal
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n)

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream, a pure function of (seed, tag). Used to give
  /// every parallel work item its own stream so scheduling cannot change
  /// results.
  Rng derive(std::uint64_t tag) const;
  Rng derive(std::string_view tag) const;
  Rng derive(std::string_view tag, std::uint64_t index) const;

private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// Runs fn(i) for i in [0, n). With threads <= 1 runs inline; otherwise
/// statically chunks across workers. Caller guarantees items are independent.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace grtp
