#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctree {

// Error hierarchy. Every failure surfaced by the library derives from Error so
// the CLI can map them onto exit codes in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InstanceNotFound : public Error {
 public:
  using Error::Error;
};
class InvalidDecision : public Error {
 public:
  using Error::Error;
};
class EpisodeFinished : public Error {
 public:
  using Error::Error;
};
class DegeneratePair : public Error {
 public:
  using Error::Error;
};
class EmptyGroup : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// 64-bit FNV-1a. Used for context ids and canonical digests; stable across
// platforms, unlike std::hash.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(std::string_view s);

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a root seed and a tuple of indices.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ull));
  h = splitmix64(h ^ (c + 0x85157af5ull));
  return h;
}

// Named stream tags for derive_seed.
enum class Stream : std::uint64_t {
  Rollout = 1,
  MonteCarloKl = 2,
  TaskSampling = 3,
  Evaluation = 4,
};

// Platform-deterministic generator. The std distributions are implementation
// defined, so sampling is done on raw 64-bit output here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Draw an index from a probability vector by inverse CDF.
  int categorical(std::span<const double> probs);

 private:
  std::uint64_t state_;
};

}  // namespace ctree
