#pragma once

#include <vector>

#include "amod/autodiff.hpp"
#include "amod/rng.hpp"

namespace amod {

struct DirichletDist {
  std::vector<double> concentration;  // every component > 0
};

// Additive floor applied to softplus outputs so concentrations stay
// strictly positive even when the raw head saturates.
inline constexpr double kConcentrationFloor = 1e-4;

// Draw via normalized independent Gamma(c_i, 1) variables.
std::vector<double> dirichlet_sample(const DirichletDist& dist, Rng& rng);

// Mean: c / sum(c).
std::vector<double> dirichlet_mean(const DirichletDist& dist);

// Pull x into the simplex interior: clamp to [eps, 1-eps], renormalize.
// Floor-converted actions can touch the boundary, hence the clamp.
std::vector<double> clamp_simplex_interior(std::vector<double> x, double eps = 1e-6);

// log Gamma(sum c) - sum log Gamma(c_i) + sum (c_i - 1) log x_i, with x
// clamped to the interior first.
double dirichlet_log_prob(const DirichletDist& dist, const std::vector<double>& x);

// Batched differentiable version: conc and x are B x N nodes (x already
// interior); returns the B x 1 log-density column.
NodeId dirichlet_log_prob_node(Tape& tape, NodeId conc, NodeId x);

}  // namespace amod
