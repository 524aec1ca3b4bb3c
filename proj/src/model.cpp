#include "flowref/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include "json.hpp"

namespace flowref {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct PairGeom {
  int i = 0;
  int j = 0;
  double bond = 0.0;  // bond order, 0 when non-bonded
  Vec3 dir = Vec3::Zero();
  Eigen::VectorXd rbf;
};

struct LayerCache {
  Eigen::MatrixXd h;                  // features entering the layer, F x N
  std::vector<Eigen::VectorXd> pair_in;
  std::vector<Eigen::VectorXd> pair_act;
  Eigen::MatrixXd agg;                // summed pair activations, H x N
  Eigen::MatrixXd c;                  // node-update hidden, H x N
};

struct Workspace {
  std::vector<PairGeom> pairs;
  Eigen::VectorXd tfeat;
  Eigen::VectorXd temb;
  std::vector<LayerCache> layers;
  CoordMatrix velocity;
};

Eigen::VectorXd time_features(double t, int n_features) {
  Eigen::VectorXd f(n_features);
  const int half = n_features / 2;
  for (int k = 0; k < half; ++k) {
    f(k) = std::sin(kPi * (k + 1) * t);
    f(half + k) = std::cos(kPi * (k + 1) * t);
  }
  return f;
}

Eigen::VectorXd radial_basis(double dist, const ModelConfig& cfg) {
  Eigen::VectorXd rbf(cfg.n_rbf);
  const double spacing = cfg.cutoff_radius / (cfg.n_rbf - 1);
  for (int k = 0; k < cfg.n_rbf; ++k) {
    const double delta = dist - k * spacing;
    rbf(k) = std::exp(-delta * delta / (2.0 * spacing * spacing));
  }
  return rbf;
}

// Ordered neighbor pairs: distance within cutoff or bonded, sorted by (i, j).
std::vector<PairGeom> build_pairs(const PointSet& x, const MolecularGraph& graph,
                                  const ModelConfig& cfg) {
  const int n = graph.n_atoms();
  Eigen::MatrixXd bond_order = Eigen::MatrixXd::Zero(n, n);
  for (const Bond& b : graph.bonds) {
    bond_order(b.i, b.j) = static_cast<double>(b.order);
    bond_order(b.j, b.i) = static_cast<double>(b.order);
  }

  std::vector<PairGeom> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec3 rij = (x.coords.row(j) - x.coords.row(i)).transpose();
      const double dist = rij.norm();
      if (dist > cfg.cutoff_radius && bond_order(i, j) == 0.0) continue;
      PairGeom p;
      p.i = i;
      p.j = j;
      p.bond = bond_order(i, j);
      p.dir = rij / (dist + cfg.denom_epsilon);
      p.rbf = radial_basis(dist, cfg);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

void check_forward_inputs(const PointSet& x, const MolecularGraph& graph,
                          double t, const ModelConfig& cfg) {
  graph.validate();
  if (x.n_atoms() != graph.n_atoms())
    throw std::invalid_argument("velocity model: coordinate/graph size mismatch");
  if (!x.all_finite())
    throw std::invalid_argument("velocity model: non-finite coordinates");
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("velocity model: t outside [0,1]");
  for (int k : graph.atom_kinds)
    if (k < 0 || k >= cfg.n_atom_kinds)
      throw std::invalid_argument("velocity model: atom kind out of range");
}

Workspace run_forward(const PointSet& x, const MolecularGraph& graph, double t,
                      const ModelConfig& cfg, const Parameters& params,
                      bool keep_cache) {
  check_forward_inputs(x, graph, t, cfg);
  const int n = graph.n_atoms();
  const int fdim = cfg.feature_dim;
  const int hdim = cfg.hidden_dim;

  Workspace ws;
  ws.pairs = build_pairs(x, graph, cfg);
  ws.tfeat = time_features(t, cfg.n_time_features);
  ws.temb = params.time_w * ws.tfeat + params.time_b.col(0);
  ws.velocity = CoordMatrix::Zero(n, 3);
  if (keep_cache) ws.layers.resize(cfg.n_layers);

  Eigen::MatrixXd h(fdim, n);
  for (int i = 0; i < n; ++i)
    h.col(i) = params.atom_embedding.row(graph.atom_kinds[i]).transpose();

  Eigen::VectorXd pair_in(cfg.pair_input_dim());
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const GateLayerParams& gate = params.gate_layers[layer];
    LayerCache* cache = keep_cache ? &ws.layers[layer] : nullptr;
    if (cache) {
      cache->h = h;
      cache->pair_in.reserve(ws.pairs.size());
      cache->pair_act.reserve(ws.pairs.size());
    }

    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(hdim, n);
    for (const PairGeom& p : ws.pairs) {
      pair_in.head(fdim) = h.col(p.i);
      pair_in.segment(fdim, fdim) = h.col(p.j);
      pair_in.segment(2 * fdim, cfg.n_rbf) = p.rbf;
      pair_in(2 * fdim + cfg.n_rbf) = p.bond;
      pair_in.tail(cfg.n_time_features) = ws.temb;

      Eigen::VectorXd act = (gate.w_in * pair_in + gate.b_in.col(0)).array().tanh();
      const double g = gate.w_gate.col(0).dot(act) + gate.b_gate(0, 0);

      ws.velocity.row(p.i) += g * p.dir.transpose();
      agg.col(p.i) += act;
      if (cache) {
        cache->pair_in.push_back(pair_in);
        cache->pair_act.push_back(std::move(act));
      }
    }

    if (layer + 1 < cfg.n_layers) {
      const NodeUpdateParams& upd = params.node_updates[layer];
      Eigen::MatrixXd h_next(fdim, n);
      Eigen::MatrixXd c_all(hdim, n);
      Eigen::VectorXd in(fdim + hdim);
      for (int i = 0; i < n; ++i) {
        in.head(fdim) = h.col(i);
        in.tail(hdim) = agg.col(i);
        Eigen::VectorXd c = (upd.w1 * in + upd.b1.col(0)).array().tanh();
        h_next.col(i) = h.col(i) + upd.w2 * c + upd.b2.col(0);
        c_all.col(i) = std::move(c);
      }
      if (cache) {
        cache->agg = std::move(agg);
        cache->c = std::move(c_all);
      }
      h = std::move(h_next);
    }
  }
  return ws;
}

// Accumulates parameter gradients for one item given dL/d(velocity).
void run_backward(const Workspace& ws, const CoordMatrix& dvel,
                  const MolecularGraph& graph, const ModelConfig& cfg,
                  const Parameters& params, Parameters& grads) {
  const int n = graph.n_atoms();
  const int fdim = cfg.feature_dim;
  const int hdim = cfg.hidden_dim;

  Eigen::VectorXd dtemb = Eigen::VectorXd::Zero(cfg.n_time_features);
  Eigen::MatrixXd dh_upper;  // dL/dh^{layer+1}; empty above the last layer

  for (int layer = cfg.n_layers - 1; layer >= 0; --layer) {
    const LayerCache& cache = ws.layers[layer];
    const GateLayerParams& gate = params.gate_layers[layer];
    GateLayerParams& dgate = grads.gate_layers[layer];

    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(fdim, n);
    Eigen::MatrixXd dagg = Eigen::MatrixXd::Zero(hdim, n);

    if (layer + 1 < cfg.n_layers) {
      const NodeUpdateParams& upd = params.node_updates[layer];
      NodeUpdateParams& dupd = grads.node_updates[layer];
      Eigen::VectorXd in(fdim + hdim);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd dhu = dh_upper.col(i);
        dh.col(i) += dhu;  // residual path
        dupd.b2.col(0) += dhu;
        dupd.w2 += dhu * cache.c.col(i).transpose();
        const Eigen::VectorXd dc = upd.w2.transpose() * dhu;
        const Eigen::VectorXd dzc =
            dc.array() * (1.0 - cache.c.col(i).array().square());
        in.head(fdim) = cache.h.col(i);
        in.tail(hdim) = cache.agg.col(i);
        dupd.w1 += dzc * in.transpose();
        dupd.b1.col(0) += dzc;
        const Eigen::VectorXd din = upd.w1.transpose() * dzc;
        dh.col(i) += din.head(fdim);
        dagg.col(i) = din.tail(hdim);
      }
    }

    for (std::size_t pi = 0; pi < ws.pairs.size(); ++pi) {
      const PairGeom& p = ws.pairs[pi];
      const Eigen::VectorXd& act = cache.pair_act[pi];
      const Eigen::VectorXd& in = cache.pair_in[pi];

      const double dg = dvel.row(p.i).dot(p.dir.transpose());
      const Eigen::VectorXd da = dg * gate.w_gate.col(0) + dagg.col(p.i);
      const Eigen::VectorXd dz = da.array() * (1.0 - act.array().square());

      dgate.w_in += dz * in.transpose();
      dgate.b_in.col(0) += dz;
      dgate.w_gate.col(0) += dg * act;
      dgate.b_gate(0, 0) += dg;

      const Eigen::VectorXd din = gate.w_in.transpose() * dz;
      dh.col(p.i) += din.head(fdim);
      dh.col(p.j) += din.segment(fdim, fdim);
      dtemb += din.tail(cfg.n_time_features);
    }

    dh_upper = std::move(dh);
  }

  for (int i = 0; i < n; ++i)
    grads.atom_embedding.row(graph.atom_kinds[i]) += dh_upper.col(i).transpose();
  grads.time_w += dtemb * ws.tfeat.transpose();
  grads.time_b.col(0) += dtemb;
}

void fill_uniform(Eigen::MatrixXd& m, double scale, RandomStream& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      m(r, c) = scale * (2.0 * rng.uniform() - 1.0);
}

}  // namespace

void MolecularGraph::validate() const {
  const int n = n_atoms();
  if (n < 1) throw std::invalid_argument("graph: needs at least one atom");
  std::set<std::pair<int, int>> seen;
  for (const Bond& b : bonds) {
    if (b.i < 0 || b.j < 0 || b.i >= n || b.j >= n)
      throw std::invalid_argument("graph: bond index out of range");
    if (b.i == b.j) throw std::invalid_argument("graph: self-bond");
    if (b.order < 1) throw std::invalid_argument("graph: bond order must be >= 1");
    auto key = std::minmax(b.i, b.j);
    if (!seen.insert(key).second)
      throw std::invalid_argument("graph: duplicate bond");
  }
}

void ModelConfig::validate() const {
  if (n_atom_kinds < 1 || feature_dim < 1 || hidden_dim < 1 || n_rbf < 2 ||
      n_layers < 1)
    throw std::invalid_argument("model config: dimensions must be positive");
  if (n_time_features < 2 || n_time_features % 2 != 0)
    throw std::invalid_argument("model config: n_time_features must be even");
  if (cutoff_radius <= 0.0 || denom_epsilon <= 0.0)
    throw std::invalid_argument("model config: cutoff and epsilon must be > 0");
}

Parameters Parameters::zeros(const ModelConfig& cfg) {
  Parameters p;
  p.atom_embedding = Eigen::MatrixXd::Zero(cfg.n_atom_kinds, cfg.feature_dim);
  p.time_w = Eigen::MatrixXd::Zero(cfg.n_time_features, cfg.n_time_features);
  p.time_b = Eigen::MatrixXd::Zero(cfg.n_time_features, 1);
  p.gate_layers.resize(cfg.n_layers);
  for (GateLayerParams& g : p.gate_layers) {
    g.w_in = Eigen::MatrixXd::Zero(cfg.hidden_dim, cfg.pair_input_dim());
    g.b_in = Eigen::MatrixXd::Zero(cfg.hidden_dim, 1);
    g.w_gate = Eigen::MatrixXd::Zero(cfg.hidden_dim, 1);
    g.b_gate = Eigen::MatrixXd::Zero(1, 1);
  }
  p.node_updates.resize(cfg.n_layers > 0 ? cfg.n_layers - 1 : 0);
  for (NodeUpdateParams& u : p.node_updates) {
    u.w1 = Eigen::MatrixXd::Zero(cfg.hidden_dim, cfg.feature_dim + cfg.hidden_dim);
    u.b1 = Eigen::MatrixXd::Zero(cfg.hidden_dim, 1);
    u.w2 = Eigen::MatrixXd::Zero(cfg.feature_dim, cfg.hidden_dim);
    u.b2 = Eigen::MatrixXd::Zero(cfg.feature_dim, 1);
  }
  return p;
}

std::vector<Eigen::MatrixXd*> param_tensors(Parameters& p) {
  std::vector<Eigen::MatrixXd*> t{&p.atom_embedding, &p.time_w, &p.time_b};
  for (GateLayerParams& g : p.gate_layers) {
    t.push_back(&g.w_in);
    t.push_back(&g.b_in);
    t.push_back(&g.w_gate);
    t.push_back(&g.b_gate);
  }
  for (NodeUpdateParams& u : p.node_updates) {
    t.push_back(&u.w1);
    t.push_back(&u.b1);
    t.push_back(&u.w2);
    t.push_back(&u.b2);
  }
  return t;
}

std::vector<const Eigen::MatrixXd*> param_tensors(const Parameters& p) {
  auto mut = param_tensors(const_cast<Parameters&>(p));
  return {mut.begin(), mut.end()};
}

std::vector<std::string> param_names(const ModelConfig& cfg) {
  std::vector<std::string> names{"atom_embedding", "time_w", "time_b"};
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    names.insert(names.end(), {p + "w_in", p + "b_in", p + "w_gate", p + "b_gate"});
  }
  for (int l = 0; l + 1 < cfg.n_layers; ++l) {
    const std::string p = "update" + std::to_string(l) + ".";
    names.insert(names.end(), {p + "w1", p + "b1", p + "w2", p + "b2"});
  }
  return names;
}

VelocityModel::VelocityModel(ModelConfig cfg, RandomStream& init_rng)
    : cfg_(std::move(cfg)), params_(Parameters::zeros(cfg_)) {
  cfg_.validate();
  fill_uniform(params_.atom_embedding, 1.0 / std::sqrt(cfg_.feature_dim), init_rng);
  fill_uniform(params_.time_w, 1.0 / std::sqrt(cfg_.n_time_features), init_rng);
  const double gate_scale = 1.0 / std::sqrt(cfg_.pair_input_dim());
  for (GateLayerParams& g : params_.gate_layers) {
    fill_uniform(g.w_in, gate_scale, init_rng);
    // Gate output heads stay zero: a fresh model is the identity refiner.
  }
  for (NodeUpdateParams& u : params_.node_updates) {
    fill_uniform(u.w1, 1.0 / std::sqrt(cfg_.feature_dim + cfg_.hidden_dim), init_rng);
    fill_uniform(u.w2, 1.0 / std::sqrt(cfg_.hidden_dim), init_rng);
  }
}

VelocityModel::VelocityModel(ModelConfig cfg, Parameters params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
}

PointSet VelocityModel::forward(const PointSet& x, const MolecularGraph& graph,
                                double t) const {
  Workspace ws = run_forward(x, graph, t, cfg_, params_, /*keep_cache=*/false);
  return PointSet(std::move(ws.velocity));
}

LossAndGrad VelocityModel::loss_and_grad(std::span<const TrainItem> batch) const {
  LossAndGrad out{0.0, Parameters::zeros(cfg_)};
  if (batch.empty()) return out;

  const double batch_inv = 1.0 / static_cast<double>(batch.size());
  for (const TrainItem& item : batch) {
    if (item.graph == nullptr)
      throw std::invalid_argument("loss_and_grad: item without graph");
    if (item.target.n_atoms() != item.x.n_atoms())
      throw std::invalid_argument("loss_and_grad: target shape mismatch");
    const double n_inv = 1.0 / static_cast<double>(item.x.n_atoms());

    Workspace ws =
        run_forward(item.x, *item.graph, item.t, cfg_, params_, /*keep_cache=*/true);
    const CoordMatrix diff = ws.velocity - item.target.coords;
    out.loss += batch_inv * n_inv * diff.squaredNorm();

    const CoordMatrix dvel = (2.0 * batch_inv * n_inv) * diff;
    run_backward(ws, dvel, *item.graph, cfg_, params_, out.grads);
  }
  return out;
}

void AdamOptimizer::step(std::vector<Eigen::MatrixXd*> params,
                         const std::vector<const Eigen::MatrixXd*>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k]->rows() != params[k]->rows() || grads[k]->cols() != params[k]->cols())
      throw std::invalid_argument("optimizer: gradient shape mismatch");
    if (!grads[k]->allFinite())
      throw NumericalError("optimizer: non-finite gradient");
  }

  if (m_.empty()) {
    for (const Eigen::MatrixXd* p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  } else if (m_.size() != params.size()) {
    throw std::invalid_argument("optimizer: parameter count changed");
  }

  ++steps_;
  const double corr1 = 1.0 - std::pow(cfg_.beta1, steps_);
  const double corr2 = 1.0 - std::pow(cfg_.beta2, steps_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Eigen::MatrixXd& g = *grads[k];
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXXd m_hat = m_[k].array() / corr1;
    const Eigen::ArrayXXd v_hat = v_[k].array() / corr2;
    params[k]->array() -= cfg_.learning_rate * m_hat / (v_hat.sqrt() + cfg_.epsilon);
    if (!params[k]->allFinite())
      throw NumericalError("optimizer: parameters became non-finite");
  }
}

void randomize_parameters(Parameters& p, RandomStream& rng, double scale) {
  for (Eigen::MatrixXd* t : param_tensors(p)) fill_uniform(*t, scale, rng);
}

void save_checkpoint(const std::filesystem::path& path, const VelocityModel& model) {
  const ModelConfig& cfg = model.config();
  nlohmann::json j;
  j["format"] = "flowref-checkpoint";
  j["version"] = 1;
  j["config"] = {{"n_atom_kinds", cfg.n_atom_kinds},
                 {"feature_dim", cfg.feature_dim},
                 {"hidden_dim", cfg.hidden_dim},
                 {"n_rbf", cfg.n_rbf},
                 {"n_time_features", cfg.n_time_features},
                 {"n_layers", cfg.n_layers},
                 {"cutoff_radius", cfg.cutoff_radius},
                 {"denom_epsilon", cfg.denom_epsilon}};

  const auto names = param_names(cfg);
  const auto tensors = param_tensors(model.params());
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t k = 0; k < names.size(); ++k) {
    const Eigen::MatrixXd& m = *tensors[k];
    params[names[k]] = {
        {"rows", m.rows()},
        {"cols", m.cols()},
        {"data", std::vector<double>(m.data(), m.data() + m.size())}};
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << j.dump(1) << '\n';
}

VelocityModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "flowref-checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path.string());
  if (j.value("version", 0) != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path.string());

  const nlohmann::json& c = j.at("config");
  ModelConfig cfg;
  cfg.n_atom_kinds = c.at("n_atom_kinds").get<int>();
  cfg.feature_dim = c.at("feature_dim").get<int>();
  cfg.hidden_dim = c.at("hidden_dim").get<int>();
  cfg.n_rbf = c.at("n_rbf").get<int>();
  cfg.n_time_features = c.at("n_time_features").get<int>();
  cfg.n_layers = c.at("n_layers").get<int>();
  cfg.cutoff_radius = c.at("cutoff_radius").get<double>();
  cfg.denom_epsilon = c.at("denom_epsilon").get<double>();
  cfg.validate();

  Parameters params = Parameters::zeros(cfg);
  const auto names = param_names(cfg);
  const auto tensors = param_tensors(params);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const nlohmann::json& entry = j.at("params").at(names[k]);
    Eigen::MatrixXd& m = *tensors[k];
    if (entry.at("rows").get<Eigen::Index>() != m.rows() ||
        entry.at("cols").get<Eigen::Index>() != m.cols())
      throw std::runtime_error("checkpoint tensor shape mismatch: " + names[k]);
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m.size())
      throw std::runtime_error("checkpoint tensor size mismatch: " + names[k]);
    std::copy(data.begin(), data.end(), m.data());
  }
  return VelocityModel(cfg, std::move(params));
}

}  // namespace flowref
