#include "amod/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace amod {

namespace {

constexpr Money kInf = std::numeric_limits<Money>::max() / 4;

struct ResidualEdge {
  int to;
  long cap;
  Money cost;
  int rev;       // index of reverse edge in adj[to]
  int orig_idx;  // index into problem.arcs, -1 for auxiliary arcs
};

class Residual {
 public:
  explicit Residual(int n) : adj_(n) {}

  void add(int u, int v, long cap, Money cost, int orig_idx) {
    adj_[u].push_back({v, cap, cost, static_cast<int>(adj_[v].size()), orig_idx});
    adj_[v].push_back({u, 0, -cost, static_cast<int>(adj_[u].size()) - 1, -1});
  }

  std::vector<std::vector<ResidualEdge>>& adj() { return adj_; }

 private:
  std::vector<std::vector<ResidualEdge>> adj_;
};

// Successive shortest paths with potentials. Returns (flow, cost).
// stop_at_nonnegative makes augmentation halt once the cheapest S-T path no
// longer has negative true cost (profit-mode problems).
std::pair<long, Money> run_ssp(Residual& g, int s, int t, long flow_target,
                               bool stop_at_nonnegative) {
  const int n = static_cast<int>(g.adj().size());
  std::vector<Money> pot(n, 0);

  // Bellman-Ford potential init; required when arcs carry negative costs.
  bool has_negative = false;
  for (int u = 0; u < n && !has_negative; ++u)
    for (const auto& e : g.adj()[u])
      if (e.cap > 0 && e.cost < 0) {
        has_negative = true;
        break;
      }
  if (has_negative) {
    std::vector<Money> d(n, kInf);
    d[s] = 0;
    for (int round = 0; round < n; ++round) {
      bool any = false;
      for (int u = 0; u < n; ++u) {
        if (d[u] == kInf) continue;
        for (const auto& e : g.adj()[u])
          if (e.cap > 0 && d[u] + e.cost < d[e.to]) {
            d[e.to] = d[u] + e.cost;
            any = true;
          }
      }
      if (!any) break;
      require(round + 1 < n || !any, "negative cycle in min-cost-flow input");
    }
    for (int u = 0; u < n; ++u) pot[u] = d[u] == kInf ? 0 : d[u];
  }

  long flow = 0;
  Money cost = 0;
  std::vector<Money> dist(n);
  std::vector<int> prev_node(n), prev_edge(n);

  while (flow < flow_target) {
    std::fill(dist.begin(), dist.end(), kInf);
    dist[s] = 0;
    using Item = std::pair<Money, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.push({0, s});
    while (!heap.empty()) {
      auto [du, u] = heap.top();
      heap.pop();
      if (du > dist[u]) continue;
      const auto& edges = g.adj()[u];
      for (int idx = 0; idx < static_cast<int>(edges.size()); ++idx) {
        const auto& e = edges[idx];
        if (e.cap <= 0) continue;
        const Money nd = du + e.cost + pot[u] - pot[e.to];
        if (nd < dist[e.to]) {
          dist[e.to] = nd;
          prev_node[e.to] = u;
          prev_edge[e.to] = idx;
          heap.push({nd, e.to});
        }
      }
    }
    if (dist[t] == kInf) break;

    const Money path_cost = dist[t] + pot[t] - pot[s];
    if (stop_at_nonnegative && path_cost >= 0) break;

    long push = flow_target - flow;
    for (int v = t; v != s; v = prev_node[v])
      push = std::min(push, g.adj()[prev_node[v]][prev_edge[v]].cap);
    for (int v = t; v != s; v = prev_node[v]) {
      auto& e = g.adj()[prev_node[v]][prev_edge[v]];
      e.cap -= push;
      g.adj()[v][e.rev].cap += push;
    }
    flow += push;
    cost += path_cost * push;

    for (int u = 0; u < n; ++u)
      pot[u] += dist[u] == kInf ? dist[t] : dist[u];
  }
  return {flow, cost};
}

McfSolution solve_impl(const McfProblem& problem, bool free_flow) {
  require(problem.n_nodes >= 0, "mcf: negative node count");
  require(static_cast<int>(problem.supply.size()) == problem.n_nodes,
          "mcf: supply size mismatch");

  const int s = problem.n_nodes;
  const int t = problem.n_nodes + 1;
  Residual g(problem.n_nodes + 2);

  long total_demand = 0;
  for (int i = 0; i < problem.n_nodes; ++i) {
    if (problem.supply[i] > 0) g.add(s, i, problem.supply[i], 0, -1);
    if (problem.supply[i] < 0) {
      g.add(i, t, -problem.supply[i], 0, -1);
      total_demand += -problem.supply[i];
    }
  }
  for (std::size_t a = 0; a < problem.arcs.size(); ++a) {
    const McfArc& arc = problem.arcs[a];
    require(arc.from >= 0 && arc.from < problem.n_nodes && arc.to >= 0 &&
                arc.to < problem.n_nodes,
            "mcf: arc endpoint out of range");
    require(arc.cap >= 0, "mcf: negative capacity");
    if (arc.cap > 0) g.add(arc.from, arc.to, arc.cap, arc.cost, static_cast<int>(a));
  }

  const long target = free_flow ? std::numeric_limits<long>::max() / 4 : total_demand;
  auto [flow, cost] = run_ssp(g, s, t, target, free_flow);
  if (!free_flow && flow < total_demand)
    throw InfeasibleError("demands cannot be met under the given capacities");

  McfSolution sol;
  sol.cost = cost;
  sol.flow.assign(problem.arcs.size(), 0);
  for (const auto& edges : g.adj())
    for (const auto& e : edges)
      if (e.orig_idx >= 0) {
        // Flow on an original arc equals the residual cap of its reverse edge.
        const auto& back = g.adj()[e.to][e.rev];
        sol.flow[e.orig_idx] = back.cap;
      }
  return sol;
}

}  // namespace

McfSolution solve_min_cost_flow(const McfProblem& problem) {
  return solve_impl(problem, /*free_flow=*/false);
}

McfSolution solve_min_cost_flow_free(const McfProblem& problem) {
  return solve_impl(problem, /*free_flow=*/true);
}

PassengerFlow solve_matching(const DemandMatrix& demand, const Grid2<Money>& price_cents,
                             const Grid2<Money>& cost_cents, const std::vector<long>& idle) {
  const int n = demand.counts.rows();
  if (demand.counts.cols() != n || price_cents.rows() != n || price_cents.cols() != n ||
      cost_cents.rows() != n || cost_cents.cols() != n ||
      static_cast<int>(idle.size()) != n)
    throw DimensionMismatch("solve_matching: inconsistent shapes");
  for (long m : idle) require(m >= 0, "solve_matching: negative idle count");

  // Bipartite transportation instance: origins 0..n-1, destinations n..2n-1.
  McfProblem p;
  p.n_nodes = 2 * n;
  p.supply.assign(2 * n, 0);
  for (int i = 0; i < n; ++i) p.supply[i] = idle[i];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const long d = demand.counts(i, j);
      const Money margin = price_cents(i, j) - cost_cents(i, j);
      if (d <= 0 || margin <= 0) continue;
      p.supply[n + j] -= d;  // sink acceptance bound
      p.arcs.push_back({i, n + j, d, -margin});
    }

  const McfSolution sol = solve_min_cost_flow_free(p);

  PassengerFlow out;
  out.x = Grid2<long>(n, n);
  for (std::size_t a = 0; a < p.arcs.size(); ++a) {
    const McfArc& arc = p.arcs[a];
    out.x(arc.from, arc.to - n) = sol.flow[a];
  }
  out.profit = -sol.cost;
  return out;
}

DesiredCounts desired_counts(const std::vector<double>& action,
                             const std::vector<long>& idle) {
  if (action.size() != idle.size())
    throw DimensionMismatch("desired_counts: action/idle size mismatch");
  double sum = 0.0;
  for (double a : action) {
    if (!(a >= -1e-12) || !std::isfinite(a))
      throw SimplexViolation("action component negative or non-finite");
    sum += a;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw SimplexViolation("action components sum to " + std::to_string(sum));

  long fleet = 0;
  for (long m : idle) {
    require(m >= 0, "desired_counts: negative idle count");
    fleet += m;
  }

  DesiredCounts out;
  out.m_hat.resize(action.size());
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double share = std::max(action[i], 0.0) * static_cast<double>(fleet);
    // Nudge absorbs float wobble on exact products (e.g. 0.1 * 30).
    out.m_hat[i] = static_cast<long>(std::floor(share + 1e-9));
  }
  return out;
}

RebalancingFlow solve_rebalancing(const std::vector<long>& idle, const DesiredCounts& desired,
                                  const Grid2<Money>& cost_cents) {
  const int n = static_cast<int>(idle.size());
  if (static_cast<int>(desired.m_hat.size()) != n || cost_cents.rows() != n ||
      cost_cents.cols() != n)
    throw DimensionMismatch("solve_rebalancing: inconsistent shapes");

  long total_idle = 0, total_target = 0;
  for (long m : idle) total_idle += m;
  for (long m : desired.m_hat) {
    require(m >= 0, "solve_rebalancing: negative target");
    total_target += m;
  }
  require(total_target <= total_idle, "solve_rebalancing: targets exceed fleet");

  // Transportation instance: senders 0..n-1 (bounded by idle), targets
  // n..2n-1 (must receive m_hat). Staying put is the zero-cost diagonal.
  McfProblem p;
  p.n_nodes = 2 * n;
  p.supply.assign(2 * n, 0);
  for (int i = 0; i < n; ++i) p.supply[i] = idle[i];
  for (int j = 0; j < n; ++j) p.supply[n + j] = -desired.m_hat[j];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (idle[i] <= 0 || desired.m_hat[j] <= 0) continue;
      p.arcs.push_back({i, n + j, std::min(idle[i], desired.m_hat[j]),
                        i == j ? 0 : cost_cents(i, j)});
    }

  const McfSolution sol = solve_min_cost_flow(p);

  RebalancingFlow out;
  out.y = Grid2<long>(n, n);
  out.cost = sol.cost;
  for (std::size_t a = 0; a < p.arcs.size(); ++a) {
    const McfArc& arc = p.arcs[a];
    const int i = arc.from;
    const int j = arc.to - n;
    if (i != j) out.y(i, j) = sol.flow[a];
  }
  return out;
}

}  // namespace amod
