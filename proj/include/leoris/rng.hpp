#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace leoris {

// Deterministic RNG: mt19937_64 plus explicit uniform/normal transforms so
// that artifacts are bit-reproducible for a given seed regardless of the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Counter-based stream derivation (splitmix64 of root ^ stream index),
  // so trial k is reproducible in isolation.
  static uint64_t derive(uint64_t root, uint64_t stream) {
    uint64_t z = root + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d normal3() { return {normal(), normal(), normal()}; }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  std::complex<double> unit_phase() {
    return std::polar(1.0, uniform(0.0, 2.0 * M_PI));
  }

  // CN(0,1) entries.
  Eigen::VectorXcd complex_normal_vector(int n) {
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) {
      v[i] = std::complex<double>(normal(), normal()) * M_SQRT1_2;
    }
    return v;
  }

  Eigen::VectorXcd unit_vector(int n) {
    Eigen::VectorXcd v = complex_normal_vector(n);
    return v / v.norm();
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace leoris
