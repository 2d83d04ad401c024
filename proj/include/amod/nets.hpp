#pragma once

#include <string>
#include <vector>

#include "amod/autodiff.hpp"
#include "amod/dirichlet.hpp"
#include "amod/env.hpp"
#include "amod/rng.hpp"

namespace amod {

// Affine layer; weights use Xavier-uniform init, biases start at zero.
struct Linear {
  ParamTensor W, b;
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);
  NodeId apply(Tape& t, NodeId x);
};

// One graph convolution with a skip connection:
// relu(adj * X * W + X * W_skip), shared across every graph in the stack.
struct GcnEncoder {
  ParamTensor W, W_skip;
  GcnEncoder() = default;
  GcnEncoder(const std::string& name, int in, int out, Rng& rng);
  NodeId apply(Tape& t, NodeId x, const Mat& adj);
};

// Node features of one observation as an N x F matrix.
Mat features_of(const Observation& obs);

// Stack observations row-wise into a (B*N) x F matrix.
Mat stack_features(const std::vector<const Observation*>& batch);

// Dirichlet policy: GCN encoder, three node-level MLP layers
// (ReLU, ReLU, linear) and a softplus head with a small positive floor.
class ActorNet {
 public:
  ActorNet() = default;
  ActorNet(const std::string& name, int feat_dim, int hidden, Rng& rng);

  // x is (B*N) x F; returns the B x N concentration matrix (all > 0).
  NodeId concentration(Tape& t, NodeId x, const Mat& adj, int n_nodes);

  DirichletDist distribution(const Observation& obs);

  std::vector<ParamTensor*> parameters();
  int feat_dim() const { return feat_dim_; }
  int hidden() const { return hidden_; }

 private:
  int feat_dim_ = 0, hidden_ = 0;
  GcnEncoder gcn_;
  Linear fc1_, fc2_, fc3_;
};

enum class ActionMode { Sample, Mean };

std::vector<double> select_action(ActorNet& actor, const Observation& obs,
                                  ActionMode mode, Rng& rng);

// The six wirings of the critic ablation. All variants share the layer
// budget (GCN + three fully connected layers); they differ in where the
// action enters and where the global sum readout happens.
enum class CriticVariant { Critic1, Critic2, Critic3, Critic4, Critic1v2, Critic3v2 };

CriticVariant parse_critic_variant(const std::string& name);
std::string critic_variant_name(CriticVariant v);

class CriticNet {
 public:
  CriticNet() = default;
  // n_nodes is only baked into the parameter shapes for Critic2 (which
  // concatenates the raw action vector after pooling and is therefore not
  // size-agnostic); all other variants ignore it.
  CriticNet(const std::string& name, int feat_dim, int hidden, int n_nodes,
            CriticVariant variant, Rng& rng);

  // Encode once, then query many actions on the same tape. For variants
  // where the action feeds the GCN the encoding is just the input and each
  // query reruns the network.
  struct Encoding {
    NodeId x = -1;       // stacked features
    NodeId h = -1;       // GCN output when action-independent
    int n_nodes = 0;
    const Mat* adj = nullptr;
  };
  Encoding encode(Tape& t, NodeId x, const Mat& adj, int n_nodes);
  // action_col is (B*N) x 1.
  NodeId q_from_encoding(Tape& t, const Encoding& enc, NodeId action_col);
  NodeId q_value(Tape& t, NodeId x, NodeId action_col, const Mat& adj, int n_nodes);

  std::vector<ParamTensor*> parameters();
  CriticVariant variant() const { return variant_; }

 private:
  int feat_dim_ = 0, hidden_ = 0, n_nodes_hint_ = 0;
  CriticVariant variant_ = CriticVariant::Critic4;
  GcnEncoder gcn_;
  Linear fc1_, fc2_, fc3_;
};

}  // namespace amod
