#pragma once

// Independent reference implementations the tests compare against. These are
// deliberately naive (greedy proofs or exhaustive enumeration) and must not
// call into the solvers they check.

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "amod/flow.hpp"
#include "amod/grid.hpp"
#include "amod/money.hpp"

namespace oracle {

// Matching reference. The program has no destination-side constraint, so each
// origin row is an independent bounded knapsack with unit weights: serving
// destinations in decreasing-margin order is exact.
inline amod::Money matching_profit(const amod::Grid2<long>& demand,
                                   const amod::Grid2<amod::Money>& price,
                                   const amod::Grid2<amod::Money>& cost,
                                   const std::vector<long>& idle) {
  const int n = demand.rows();
  amod::Money profit = 0;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<amod::Money, int>> margins;
    for (int j = 0; j < n; ++j) {
      const amod::Money m = price(i, j) - cost(i, j);
      if (m > 0 && demand(i, j) > 0) margins.push_back({m, j});
    }
    std::sort(margins.begin(), margins.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    long remaining = idle[i];
    for (const auto& [margin, j] : margins) {
      const long served = std::min(remaining, demand(i, j));
      profit += margin * served;
      remaining -= served;
      if (remaining == 0) break;
    }
  }
  return profit;
}

// Rebalancing reference: enumerate every integer flow matrix with
// sum_{j != i} y_ij <= m_i and keep the cheapest one that reaches the
// targets. Exponential, so callers keep instances tiny.
inline long long rebalancing_cost(const std::vector<long>& idle,
                                  const std::vector<long>& target,
                                  const amod::Grid2<amod::Money>& cost) {
  const int n = static_cast<int>(idle.size());
  amod::Grid2<long> y(n, n);
  long long best = -1;

  std::function<void(int, long long)> per_sender = [&](int i, long long acc) {
    if (best >= 0 && acc >= best) return;
    if (i == n) {
      for (int k = 0; k < n; ++k) {
        long inflow = 0, outflow = 0;
        for (int j = 0; j < n; ++j) {
          inflow += y(j, k);
          outflow += y(k, j);
        }
        if (idle[k] + inflow - outflow < target[k]) return;
      }
      best = best < 0 ? acc : std::min(best, acc);
      return;
    }
    // Enumerate this sender's allocation to every other station.
    std::function<void(int, long, long long)> per_dest = [&](int j, long left,
                                                             long long acc2) {
      if (j == n) {
        per_sender(i + 1, acc2);
        return;
      }
      if (j == i) {
        per_dest(j + 1, left, acc2);
        return;
      }
      for (long v = 0; v <= left; ++v) {
        y(i, j) = v;
        per_dest(j + 1, left - v, acc2 + v * cost(i, j));
      }
      y(i, j) = 0;
    };
    per_dest(0, idle[i], acc);
  };
  per_sender(0, 0);
  return best;
}

struct BruteForceMcf {
  bool feasible = false;
  amod::Money cost = 0;
};

// Exhaustive min-cost-flow reference. free_flow relaxes demand satisfaction
// to an upper bound and simply takes the cheapest (possibly negative-cost)
// feasible flow.
inline BruteForceMcf brute_force_mcf(const amod::McfProblem& p, bool free_flow) {
  const int m = static_cast<int>(p.arcs.size());
  std::vector<long> flow(m, 0);
  BruteForceMcf out;

  std::function<void(int)> rec = [&](int a) {
    if (a == m) {
      std::vector<long> net(p.n_nodes, 0);
      for (int k = 0; k < m; ++k) {
        net[p.arcs[k].from] += flow[k];
        net[p.arcs[k].to] -= flow[k];
      }
      for (int v = 0; v < p.n_nodes; ++v) {
        const long s = p.supply[v];
        if (s > 0) {
          if (net[v] < 0 || net[v] > s) return;
        } else if (s < 0) {
          if (free_flow ? (net[v] > 0 || net[v] < s) : net[v] != s) return;
        } else {
          if (net[v] != 0) return;
        }
      }
      amod::Money c = 0;
      for (int k = 0; k < m; ++k) c += flow[k] * p.arcs[k].cost;
      if (!out.feasible || c < out.cost) {
        out.feasible = true;
        out.cost = c;
      }
      return;
    }
    for (long v = 0; v <= p.arcs[a].cap; ++v) {
      flow[a] = v;
      rec(a + 1);
    }
    flow[a] = 0;
  };
  rec(0);
  return out;
}

// Central finite difference of f at x along coordinate k.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t k,
                                 double h = 1e-5) {
  x[k] += h;
  const double up = f(x);
  x[k] -= 2.0 * h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

}  // namespace oracle
