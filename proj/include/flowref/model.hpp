#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowref/geom.hpp"
#include "flowref/rng.hpp"

namespace flowref {

struct Bond {
  int i = 0;
  int j = 0;
  int order = 1;
};

/// Molecular graph: per-atom type codes plus an undirected bond list
/// (each pair stored once).
struct MolecularGraph {
  std::vector<int> atom_kinds;
  std::vector<Bond> bonds;

  int n_atoms() const { return static_cast<int>(atom_kinds.size()); }
  void validate() const;
};

struct ModelConfig {
  int n_atom_kinds = 8;
  int feature_dim = 32;     // node feature width
  int hidden_dim = 64;      // MLP hidden width
  int n_rbf = 16;           // radial basis functions on [0, cutoff_radius]
  int n_time_features = 16; // sinusoidal time features (and embedding width)
  int n_layers = 3;
  double cutoff_radius = 5.0;     // Angstrom
  double denom_epsilon = 1e-8;    // stabilizer for r_ij / (|r_ij| + eps)

  int pair_input_dim() const {
    return 2 * feature_dim + n_rbf + 1 + n_time_features;
  }
  void validate() const;
};

/// Scalar gate MLP of one message-passing block: pair input -> hidden ->
/// scalar gate. The gate multiplies the unit relative vector, so the output
/// stays exactly rotation-equivariant and translation-invariant.
struct GateLayerParams {
  Eigen::MatrixXd w_in;    // hidden x pair_input
  Eigen::MatrixXd b_in;    // hidden x 1
  Eigen::MatrixXd w_gate;  // hidden x 1
  Eigen::MatrixXd b_gate;  // 1 x 1
};

/// Invariant node-feature update between blocks:
/// h <- h + W2 tanh(W1 [h; sum_j hidden_ij] + b1) + b2.
struct NodeUpdateParams {
  Eigen::MatrixXd w1;  // hidden x (feature + hidden)
  Eigen::MatrixXd b1;  // hidden x 1
  Eigen::MatrixXd w2;  // feature x hidden
  Eigen::MatrixXd b2;  // feature x 1
};

struct Parameters {
  Eigen::MatrixXd atom_embedding;  // n_atom_kinds x feature_dim, row per kind
  Eigen::MatrixXd time_w;          // n_time_features x n_time_features
  Eigen::MatrixXd time_b;          // n_time_features x 1
  std::vector<GateLayerParams> gate_layers;
  std::vector<NodeUpdateParams> node_updates;  // n_layers - 1 entries

  static Parameters zeros(const ModelConfig& cfg);
};

/// Flat view of every parameter tensor in a fixed order; the shared ordering
/// drives the optimizer, serialization, and gradient checks.
std::vector<Eigen::MatrixXd*> param_tensors(Parameters& p);
std::vector<const Eigen::MatrixXd*> param_tensors(const Parameters& p);
std::vector<std::string> param_names(const ModelConfig& cfg);

/// One regression example: noisy state, flow time, graph, target velocity.
struct TrainItem {
  PointSet x;
  double t = 0.0;
  const MolecularGraph* graph = nullptr;
  PointSet target;
};

struct LossAndGrad {
  double loss = 0.0;
  Parameters grads;
};

/// Rotation- and translation-equivariant velocity field u(x, t, graph).
///
/// Each block gates the unit relative vector of every neighbor pair
/// (|r_ij| <= cutoff, plus all bonded pairs) by a scalar MLP of invariant
/// inputs: node features of both endpoints, a radial basis expansion of the
/// pair distance, the bond order, and a learned embedding of sinusoidal time
/// features. Gate output heads start at zero, so a freshly initialized model
/// is the identity refiner.
class VelocityModel {
 public:
  VelocityModel(ModelConfig cfg, RandomStream& init_rng);
  VelocityModel(ModelConfig cfg, Parameters params);

  const ModelConfig& config() const { return cfg_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  PointSet forward(const PointSet& x, const MolecularGraph& graph, double t) const;

  /// Mean over items of the per-atom-averaged squared velocity error, with
  /// exact analytic gradients for every parameter tensor.
  LossAndGrad loss_and_grad(std::span<const TrainItem> batch) const;

 private:
  ModelConfig cfg_;
  Parameters params_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over the flat parameter-tensor list. With both
/// decay rates zero the update degenerates to eta * g / (|g| + eps).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

  /// Throws NumericalError on any non-finite gradient; parameters untouched.
  void step(std::vector<Eigen::MatrixXd*> params,
            const std::vector<const Eigen::MatrixXd*>& grads);

  int step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Eigen::MatrixXd> m_, v_;
  int steps_ = 0;
};

/// Fills every tensor (gate heads included) with uniform noise of the given
/// scale; used by tests that need a non-trivial field.
void randomize_parameters(Parameters& p, RandomStream& rng, double scale = 0.5);

/// Checkpoint container: hyperparameters plus full-precision parameter
/// tensors; round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const VelocityModel& model);
VelocityModel load_checkpoint(const std::filesystem::path& path);

}  // namespace flowref
