#include "amod/rng.hpp"

#include <cmath>

#include "amod/errors.hpp"

namespace amod {

std::uint64_t Rng::uniform_below(std::uint64_t n) {
  require(n > 0, "uniform_below(0)");
  // Rejection to kill modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform_pos();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

namespace {

// Hormann's PTRD transformed-rejection sampler, valid for mu >= 10.
long poisson_ptrd(Rng& rng, double mu) {
  const double smu = std::sqrt(mu);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);

  for (;;) {
    double u;
    double v = rng.uniform();
    if (v <= 0.86 * v_r) {
      u = v / v_r - 0.43;
      return static_cast<long>(
          std::floor((2.0 * a / (0.5 - std::fabs(u)) + b) * u + mu + 0.445));
    }
    if (v >= v_r) {
      u = rng.uniform() - 0.5;
    } else {
      u = v / v_r - 0.93;
      u = (u < 0 ? -0.5 : 0.5) - u;
      v = rng.uniform() * v_r;
    }
    const double us = 0.5 - std::fabs(u);
    if (us < 0.013 && v > us) continue;
    const double kf = std::floor((2.0 * a / us + b) * u + mu + 0.445);
    v = v * inv_alpha / (a / (us * us) + b);
    if (kf >= 10.0) {
      const double term = (kf + 0.5) * std::log(mu / kf) - mu -
                          std::log(std::sqrt(2.0 * M_PI)) + kf -
                          (1.0 / 12.0 - 1.0 / (360.0 * kf * kf)) / kf;
      if (std::log(v * smu) <= term) return static_cast<long>(kf);
    } else if (kf >= 0.0) {
      if (std::log(v) <= kf * std::log(mu) - mu - std::lgamma(kf + 1.0))
        return static_cast<long>(kf);
    }
  }
}

}  // namespace

long Rng::poisson(double lambda) {
  require(lambda >= 0.0 && std::isfinite(lambda), "poisson rate must be finite and >= 0");
  if (lambda == 0.0) return 0;
  if (lambda < 10.0) {
    // Sequential inversion.
    double p = std::exp(-lambda);
    double s = p;
    const double u = uniform();
    long k = 0;
    while (u > s) {
      ++k;
      p *= lambda / static_cast<double>(k);
      s += p;
      if (k > 10000) break;  // numerically unreachable for lambda < 10
    }
    return k;
  }
  return poisson_ptrd(*this, lambda);
}

double Rng::gamma(double shape) {
  require(shape > 0.0, "gamma shape must be > 0");
  if (shape < 1.0) {
    const double u = uniform_pos();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(const std::vector<double>& concentration) {
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    out[i] = gamma(concentration[i]);
    total += out[i];
  }
  // All-zero draws have probability zero; guard anyway.
  if (total <= 0.0) {
    const double uniform_share = 1.0 / static_cast<double>(out.size());
    for (double& v : out) v = uniform_share;
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ 0xA0761D6478BD642FULL) + splitmix64(stream) * 0xE7037ED1A0B428DBULL + index);
}

}  // namespace amod
