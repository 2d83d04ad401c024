#pragma once

#include <vector>

#include "amod/demand.hpp"
#include "amod/grid.hpp"
#include "amod/money.hpp"

namespace amod {

// ---------------------------------------------------------------------------
// Generic integral min-cost-flow engine (successive shortest paths with
// node potentials). Costs are integer cents so optima compare exactly.
// ---------------------------------------------------------------------------

struct McfArc {
  int from = 0;
  int to = 0;
  long cap = 0;
  Money cost = 0;
};

// supply[i] > 0 offers flow, supply[i] < 0 demands it. The solver must meet
// every demand; surplus supply may stay unused. No negative-cost directed
// cycles may exist among the arcs.
struct McfProblem {
  int n_nodes = 0;
  std::vector<long> supply;
  std::vector<McfArc> arcs;
};

struct McfSolution {
  std::vector<long> flow;  // aligned with problem.arcs
  Money cost = 0;
};

McfSolution solve_min_cost_flow(const McfProblem& problem);

// Variant used by profit-maximizing problems: flow is optional, augmentation
// stops once no negative-cost (profitable) path remains. Supplies act as
// capacities only; demands are upper bounds on what sinks accept.
McfSolution solve_min_cost_flow_free(const McfProblem& problem);

// ---------------------------------------------------------------------------
// The two transportation problems of the dispatch framework.
// ---------------------------------------------------------------------------

struct PassengerFlow {
  Grid2<long> x;        // matched trips per OD pair
  Money profit = 0;     // sum x_ij (p_ij - c_ij)
};

struct RebalancingFlow {
  Grid2<long> y;        // relocations per OD pair, zero diagonal
  Money cost = 0;       // sum c_ij y_ij
};

struct DesiredCounts {
  std::vector<long> m_hat;
};

// Profit-maximal integral matching of idle vehicles to requests:
// max sum x_ij (p_ij - c_ij) s.t. 0 <= x_ij <= d_ij, sum_j x_ij <= idle_i.
// OD pairs with nonpositive margin are left unserved.
PassengerFlow solve_matching(const DemandMatrix& demand, const Grid2<Money>& price_cents,
                             const Grid2<Money>& cost_cents, const std::vector<long>& idle);

// Floor conversion of a simplex action into integer target counts:
// m_hat_i = floor(a_i * sum(idle)). Guarantees sum m_hat <= sum idle.
DesiredCounts desired_counts(const std::vector<double>& action,
                             const std::vector<long>& idle);

// Minimal-cost relocation reaching at least the desired counts:
// min sum c_ij y_ij s.t. idle_i + sum_j (y_ji - y_ij) >= m_hat_i,
// sum_{j != i} y_ij <= idle_i.
RebalancingFlow solve_rebalancing(const std::vector<long>& idle, const DesiredCounts& desired,
                                  const Grid2<Money>& cost_cents);

}  // namespace amod
