#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace romax {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using BoolArr = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Shape/argument mismatch between networks, caches, boxes, batches.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or other unrecoverable failures during training.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad key, bad value, missing file).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive an independent stream seed from a master seed and a stream tag.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

/// Seeded RNG with the distributions used across the project.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  /// Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    return std::uniform_int_distribution<int64_t>(0, n - 1)(gen_);
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace romax
