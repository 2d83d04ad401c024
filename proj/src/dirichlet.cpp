#include "amod/dirichlet.hpp"

#include <cmath>

namespace amod {

std::vector<double> dirichlet_sample(const DirichletDist& dist, Rng& rng) {
  for (double c : dist.concentration)
    require(c > 0.0 && std::isfinite(c), "dirichlet concentration must be positive");
  return rng.dirichlet(dist.concentration);
}

std::vector<double> dirichlet_mean(const DirichletDist& dist) {
  double total = 0.0;
  for (double c : dist.concentration) {
    require(c > 0.0 && std::isfinite(c), "dirichlet concentration must be positive");
    total += c;
  }
  std::vector<double> mean(dist.concentration.size());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = dist.concentration[i] / total;
  return mean;
}

std::vector<double> clamp_simplex_interior(std::vector<double> x, double eps) {
  double sum = 0.0;
  for (double& v : x) {
    v = std::min(std::max(v, eps), 1.0 - eps);
    sum += v;
  }
  for (double& v : x) v /= sum;
  return x;
}

double dirichlet_log_prob(const DirichletDist& dist, const std::vector<double>& x) {
  if (dist.concentration.size() != x.size())
    throw DimensionMismatch("dirichlet_log_prob: concentration/x size mismatch");
  const auto xi = clamp_simplex_interior(x);
  double conc_sum = 0.0, lg_sum = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double c = dist.concentration[i];
    require(c > 0.0 && std::isfinite(c), "dirichlet concentration must be positive");
    conc_sum += c;
    lg_sum += std::lgamma(c);
    dot += (c - 1.0) * std::log(xi[i]);
  }
  return std::lgamma(conc_sum) - lg_sum + dot;
}

NodeId dirichlet_log_prob_node(Tape& tape, NodeId conc, NodeId x) {
  require(tape.value(conc).same_shape(tape.value(x)),
          "dirichlet_log_prob_node: shape mismatch");
  const NodeId lg_total = tape.lgamma(tape.row_sum(conc));
  const NodeId lg_each = tape.row_sum(tape.lgamma(conc));
  const NodeId dot = tape.row_sum(tape.mul(tape.add_const(conc, -1.0), tape.log(x)));
  return tape.add(tape.sub(lg_total, lg_each), dot);
}

}  // namespace amod
