#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amod/autodiff.hpp"

namespace amod {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Throws NonFiniteGradient on bad grads
// and guarantees finite parameters afterwards.
void adam_step(const std::vector<ParamTensor*>& params, const AdamConfig& config);

void zero_grads(const std::vector<ParamTensor*>& params);

// target <- (1 - tau) * target + tau * online, pairwise by position.
void polyak_update(const std::vector<ParamTensor*>& target,
                   const std::vector<ParamTensor*>& online, double tau);

void copy_params(const std::vector<ParamTensor*>& dst,
                 const std::vector<ParamTensor*>& src);

// Versioned JSON checkpoint: map name -> shape + row-major values. Loading
// reads only the header and the params map, so writers may attach extra
// top-level metadata; params_json_text returns the document for them to
// extend before writing.
void save_params(const std::vector<const ParamTensor*>& params, const std::string& path);
std::string params_json_text(const std::vector<const ParamTensor*>& params);
void load_params(const std::vector<ParamTensor*>& params, const std::string& path);

// Bit-exact content hash of all parameter values, order-sensitive.
std::uint64_t params_checksum(const std::vector<const ParamTensor*>& params);

inline std::vector<const ParamTensor*> const_view(const std::vector<ParamTensor*>& p) {
  return {p.begin(), p.end()};
}

}  // namespace amod
