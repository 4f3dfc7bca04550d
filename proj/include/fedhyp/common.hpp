#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedhyp {

using Vec = std::vector<double>;

// Row-major dense matrix, minimal on purpose: the models here are tiny
// MLPs and everything is explicit loops.
struct Mat {
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vec row(std::size_t i) const {
    return Vec(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
               data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
  }
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Stable seed derivation so that per-client / per-round streams are
// independent of execution order and worker count.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = base ^ 0x9e3779b97f4a7c15ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
  };
  mix(a);
  mix(b);
  return h;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sq_norm(const Vec& a) { return dot(a, a); }

inline double norm(const Vec& a) {
  double s = sq_norm(a);
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

inline Vec axpy(double alpha, const Vec& x, const Vec& y) {
  Vec out(y);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
  return out;
}

inline Vec scaled(const Vec& x, double alpha) {
  Vec out(x);
  for (double& v : out) v *= alpha;
  return out;
}

}  // namespace fedhyp
