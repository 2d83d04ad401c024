#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace amod {

// Deterministic random stream. All sampling routines are implemented here
// (not delegated to std:: distributions) so that a fixed seed reproduces the
// same draws everywhere the library is built.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1); never returns 0.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);

  // Standard normal via Box-Muller (one value cached).
  double normal();

  // Poisson(lambda): sequential inversion for lambda < 10, transformed
  // rejection (PTRD) above.
  long poisson(double lambda);

  // Gamma(shape, 1) via Marsaglia-Tsang, with the power boost for shape < 1.
  double gamma(double shape);

  // Dirichlet(concentration) as normalized gamma draws.
  std::vector<double> dirichlet(const std::vector<double>& concentration);

 private:
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// Stateless seed mixing for deriving independent substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace amod
