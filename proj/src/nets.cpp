#include "amod/nets.hpp"

#include <cmath>

#include "amod/errors.hpp"

namespace amod {
namespace {

Mat xavier(int in, int out, Rng& rng) {
  Mat w(in, out);
  const double limit = std::sqrt(6.0 / (in + out));
  for (double& x : w.v) x = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

void check_finite(const Mat& m, const std::string& what) {
  for (double x : m.v)
    if (!std::isfinite(x)) throw NonFiniteOutput(what + " produced a non-finite value");
}

}  // namespace

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : W{name + ".W", xavier(in, out, rng)}, b{name + ".b", Mat(1, out)} {}

NodeId Linear::apply(Tape& t, NodeId x) {
  return t.add_row_broadcast(t.matmul(x, t.param(W)), t.param(b));
}

GcnEncoder::GcnEncoder(const std::string& name, int in, int out, Rng& rng)
    : W{name + ".W", xavier(in, out, rng)},
      W_skip{name + ".W_skip", xavier(in, out, rng)} {}

NodeId GcnEncoder::apply(Tape& t, NodeId x, const Mat& adj) {
  NodeId mixed = t.matmul(t.block_adj_mul(x, adj), t.param(W));
  NodeId skip = t.matmul(x, t.param(W_skip));
  return t.relu(t.add(mixed, skip));
}

Mat features_of(const Observation& obs) {
  return mat_of_grid(obs.node_features);
}

Mat stack_features(const std::vector<const Observation*>& batch) {
  if (batch.empty()) throw EmptyBatch("no observations to stack");
  const int n = batch[0]->node_features.rows();
  const int f = batch[0]->node_features.cols();
  Mat out(static_cast<int>(batch.size()) * n, f);
  double* dst = out.v.data();
  for (const Observation* obs : batch) {
    if (obs->node_features.rows() != n || obs->node_features.cols() != f)
      throw DimensionMismatch("observations in a batch must share shape");
    const auto& src = obs->node_features.flat();
    std::copy(src.begin(), src.end(), dst);
    dst += src.size();
  }
  return out;
}

ActorNet::ActorNet(const std::string& name, int feat_dim, int hidden, Rng& rng)
    : feat_dim_(feat_dim),
      hidden_(hidden),
      gcn_(name + ".gcn", feat_dim, hidden, rng),
      fc1_(name + ".fc1", hidden, hidden, rng),
      fc2_(name + ".fc2", hidden, hidden, rng),
      fc3_(name + ".fc3", hidden, 1, rng) {}

NodeId ActorNet::concentration(Tape& t, NodeId x, const Mat& adj, int n_nodes) {
  NodeId h = gcn_.apply(t, x, adj);
  h = t.relu(fc1_.apply(t, h));
  h = t.relu(fc2_.apply(t, h));
  NodeId raw = fc3_.apply(t, h);  // (B*N) x 1
  NodeId conc = t.add_const(t.softplus(raw), kConcentrationFloor);
  const int batch = t.value(x).rows / n_nodes;
  NodeId out = t.reshape(conc, batch, n_nodes);
  check_finite(t.value(out), "actor");
  return out;
}

DirichletDist ActorNet::distribution(const Observation& obs) {
  Tape t(false);
  Mat feats = features_of(obs);
  const int n = feats.rows;
  NodeId conc = concentration(t, t.input(std::move(feats)),
                              mat_of_grid(obs.adjacency), n);
  return DirichletDist{t.value(conc).v};
}

std::vector<ParamTensor*> ActorNet::parameters() {
  return {&gcn_.W, &gcn_.W_skip, &fc1_.W, &fc1_.b,
          &fc2_.W, &fc2_.b,      &fc3_.W, &fc3_.b};
}

std::vector<double> select_action(ActorNet& actor, const Observation& obs,
                                  ActionMode mode, Rng& rng) {
  DirichletDist dist = actor.distribution(obs);
  if (mode == ActionMode::Mean) return dirichlet_mean(dist);
  return dirichlet_sample(dist, rng);
}

CriticVariant parse_critic_variant(const std::string& name) {
  if (name == "critic1") return CriticVariant::Critic1;
  if (name == "critic2") return CriticVariant::Critic2;
  if (name == "critic3") return CriticVariant::Critic3;
  if (name == "critic4") return CriticVariant::Critic4;
  if (name == "critic1v2") return CriticVariant::Critic1v2;
  if (name == "critic3v2") return CriticVariant::Critic3v2;
  throw UnknownVariant("UnknownVariant: " + name);
}

std::string critic_variant_name(CriticVariant v) {
  switch (v) {
    case CriticVariant::Critic1: return "critic1";
    case CriticVariant::Critic2: return "critic2";
    case CriticVariant::Critic3: return "critic3";
    case CriticVariant::Critic4: return "critic4";
    case CriticVariant::Critic1v2: return "critic1v2";
    case CriticVariant::Critic3v2: return "critic3v2";
  }
  throw UnknownVariant("UnknownVariant: bad critic enum");
}

CriticNet::CriticNet(const std::string& name, int feat_dim, int hidden,
                     int n_nodes, CriticVariant variant, Rng& rng)
    : feat_dim_(feat_dim), hidden_(hidden), n_nodes_hint_(n_nodes), variant_(variant) {
  const bool action_in_gcn =
      variant == CriticVariant::Critic3 || variant == CriticVariant::Critic3v2;
  gcn_ = GcnEncoder(name + ".gcn", action_in_gcn ? feat_dim + 1 : feat_dim,
                    hidden, rng);
  switch (variant) {
    case CriticVariant::Critic1:
    case CriticVariant::Critic1v2:
    case CriticVariant::Critic3:
    case CriticVariant::Critic3v2:
      fc1_ = Linear(name + ".fc1", hidden, hidden, rng);
      break;
    case CriticVariant::Critic2:
      fc1_ = Linear(name + ".fc1", hidden + n_nodes, hidden, rng);
      break;
    case CriticVariant::Critic4:
      fc1_ = Linear(name + ".fc1", hidden + 1, hidden, rng);
      break;
  }
  fc2_ = Linear(name + ".fc2", hidden, hidden, rng);
  fc3_ = Linear(name + ".fc3", hidden, 1, rng);
}

CriticNet::Encoding CriticNet::encode(Tape& t, NodeId x, const Mat& adj,
                                      int n_nodes) {
  Encoding enc;
  enc.x = x;
  enc.n_nodes = n_nodes;
  enc.adj = &adj;
  const bool action_in_gcn =
      variant_ == CriticVariant::Critic3 || variant_ == CriticVariant::Critic3v2;
  if (!action_in_gcn) enc.h = gcn_.apply(t, x, adj);
  return enc;
}

NodeId CriticNet::q_from_encoding(Tape& t, const Encoding& enc, NodeId action_col) {
  const int n = enc.n_nodes;
  switch (variant_) {
    case CriticVariant::Critic1: {
      // Weight node embeddings by the action, pool, then a graph-level MLP.
      NodeId weighted = t.mul_col_broadcast(enc.h, action_col);
      NodeId pooled = t.block_row_sum(weighted, n);
      NodeId z = t.relu(fc1_.apply(t, pooled));
      z = t.relu(fc2_.apply(t, z));
      return fc3_.apply(t, z);
    }
    case CriticVariant::Critic2: {
      // Pool first, then concatenate the raw action vector. Ties the net to
      // a fixed station count and ordering.
      NodeId pooled = t.block_row_sum(enc.h, n);
      const int batch = t.value(enc.h).rows / n;
      NodeId a_mat = t.reshape(action_col, batch, n);
      NodeId z = t.col_concat(pooled, a_mat);
      z = t.relu(fc1_.apply(t, z));
      z = t.relu(fc2_.apply(t, z));
      return fc3_.apply(t, z);
    }
    case CriticVariant::Critic3: {
      // Action rides along as an extra node feature into the GCN.
      NodeId xa = t.col_concat(enc.x, action_col);
      NodeId h = gcn_.apply(t, xa, *enc.adj);
      NodeId pooled = t.block_row_sum(h, n);
      NodeId z = t.relu(fc1_.apply(t, pooled));
      z = t.relu(fc2_.apply(t, z));
      return fc3_.apply(t, z);
    }
    case CriticVariant::Critic4: {
      // Concatenate the action per node, run node-level layers, pool late.
      NodeId za = t.col_concat(enc.h, action_col);
      NodeId z = t.relu(fc1_.apply(t, za));
      z = t.relu(fc2_.apply(t, z));
      NodeId pooled = t.block_row_sum(z, n);
      return fc3_.apply(t, pooled);
    }
    case CriticVariant::Critic1v2: {
      // Like Critic1 but the MLP stays node-level until the final layer.
      NodeId weighted = t.mul_col_broadcast(enc.h, action_col);
      NodeId z = t.relu(fc1_.apply(t, weighted));
      z = t.relu(fc2_.apply(t, z));
      NodeId pooled = t.block_row_sum(z, n);
      return fc3_.apply(t, pooled);
    }
    case CriticVariant::Critic3v2: {
      // Action as GCN input feature, node-level layers, pool late.
      NodeId xa = t.col_concat(enc.x, action_col);
      NodeId h = gcn_.apply(t, xa, *enc.adj);
      NodeId z = t.relu(fc1_.apply(t, h));
      z = t.relu(fc2_.apply(t, z));
      NodeId pooled = t.block_row_sum(z, n);
      return fc3_.apply(t, pooled);
    }
  }
  throw UnknownVariant("UnknownVariant: bad critic enum");
}

NodeId CriticNet::q_value(Tape& t, NodeId x, NodeId action_col, const Mat& adj,
                          int n_nodes) {
  return q_from_encoding(t, encode(t, x, adj, n_nodes), action_col);
}

std::vector<ParamTensor*> CriticNet::parameters() {
  return {&gcn_.W, &gcn_.W_skip, &fc1_.W, &fc1_.b,
          &fc2_.W, &fc2_.b,      &fc3_.W, &fc3_.b};
}

}  // namespace amod
