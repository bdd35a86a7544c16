#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace certed {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a duality-gap certificate is unusable (dual objective <= 0).
struct CertificateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named-stream seed splitter: all randomness in the project flows from one
// user seed; independent components draw from split(seed, "name") streams.
inline std::uint64_t split_seed(std::uint64_t seed, std::string_view stream) {
  // FNV-1a over the stream name, mixed with the seed (splitmix64 finalizer).
  std::uint64_t h = 14695981039346656037ull;
  for (char ch : stream) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t split_seed(std::uint64_t seed, std::string_view stream,
                                std::uint64_t index) {
  return split_seed(split_seed(seed, stream), std::to_string(index));
}

}  // namespace certed
