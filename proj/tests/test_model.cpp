#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "doctest.h"
#include "flowref/model.hpp"
#include "test_util.hpp"

using namespace flowref;
using namespace testutil;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_atom_kinds = 4;
  cfg.feature_dim = 6;
  cfg.hidden_dim = 8;
  cfg.n_rbf = 5;
  cfg.n_time_features = 4;
  cfg.n_layers = 2;
  cfg.cutoff_radius = 5.0;
  return cfg;
}

std::vector<TrainItem> random_batch(const std::vector<MolecularGraph>& graphs,
                                    RandomStream& rng) {
  std::vector<TrainItem> batch;
  for (const MolecularGraph& g : graphs) {
    TrainItem item;
    item.x = random_points(g.n_atoms(), rng, 1.5);
    item.t = rng.uniform();
    item.graph = &g;
    item.target = random_points(g.n_atoms(), rng);
    batch.push_back(std::move(item));
  }
  return batch;
}

double batch_loss(const VelocityModel& model, std::span<const TrainItem> batch) {
  double loss = 0.0;
  for (const TrainItem& item : batch) {
    const PointSet pred = model.forward(item.x, *item.graph, item.t);
    loss += (pred.coords - item.target.coords).squaredNorm() /
            static_cast<double>(item.x.n_atoms());
  }
  return loss / static_cast<double>(batch.size());
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("graph validation rejects malformed bonds") {
  MolecularGraph g;
  g.atom_kinds = {0, 1, 2};
  g.bonds = {{0, 3, 1}};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.bonds = {{1, 1, 1}};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.bonds = {{0, 1, 1}, {1, 0, 1}};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.bonds = {{0, 1, 1}, {1, 2, 2}};
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("a fresh model is the identity refiner: zero velocity everywhere") {
  RandomStream rng(51);
  VelocityModel model(ModelConfig{}, rng);
  const MolecularGraph g = random_graph(6, rng, ModelConfig{}.n_atom_kinds);
  const PointSet vel = model.forward(random_points(6, rng, 2.0), g, 0.4);
  CHECK(vel.coords.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a single atom with no neighbors gets zero velocity") {
  RandomStream rng(52);
  VelocityModel model(small_config(), rng);
  randomize_parameters(model.params(), rng);
  MolecularGraph g;
  g.atom_kinds = {1};
  const PointSet vel = model.forward(random_points(1, rng), g, 0.5);
  CHECK(vel.coords.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the output is exactly equivariant under rigid motion") {
  RandomStream rng(53);
  VelocityModel model(small_config(), rng);
  randomize_parameters(model.params(), rng);
  const MolecularGraph g = random_graph(6, rng);
  for (int probe = 0; probe < 100; ++probe) {
    const PointSet x = random_points(6, rng, 2.0);
    const double t = rng.uniform();
    const RigidTransform xf = random_rigid(rng);

    PointSet moved = apply(xf, x);
    const PointSet vel_moved = model.forward(moved, g, t);
    const CoordMatrix expected =
        model.forward(x, g, t).coords * xf.rotation.transpose();
    CHECK(max_abs_diff(vel_moved.coords, expected) < 1e-10);
  }
}

TEST_CASE("with a single neighbor the velocity is parallel to the pair axis") {
  RandomStream rng(54);
  VelocityModel model(small_config(), rng);
  randomize_parameters(model.params(), rng);
  MolecularGraph g;
  g.atom_kinds = {0, 2};
  g.bonds = {{0, 1, 1}};
  const PointSet x = random_points(2, rng, 2.0);
  const PointSet vel = model.forward(x, g, 0.3);
  const Vec3 axis = (x.coords.row(1) - x.coords.row(0)).transpose();
  for (int i = 0; i < 2; ++i) {
    const Vec3 v = vel.coords.row(i).transpose();
    CHECK(v.cross(axis).norm() < 1e-10 * std::max(1.0, v.norm() * axis.norm()));
  }
}

TEST_CASE("an atom beyond the cutoff and unbonded contributes exactly nothing") {
  RandomStream rng(55);
  ModelConfig cfg = small_config();
  VelocityModel model(cfg, rng);
  randomize_parameters(model.params(), rng);

  MolecularGraph pair_graph;
  pair_graph.atom_kinds = {0, 1};
  pair_graph.bonds = {{0, 1, 1}};

  MolecularGraph triple_graph;
  triple_graph.atom_kinds = {0, 1, 2};
  triple_graph.bonds = {{0, 1, 1}};  // third atom isolated

  PointSet near = random_points(2, rng);
  PointSet with_far(CoordMatrix(3, 3));
  with_far.coords.topRows(2) = near.coords;
  with_far.coords.row(2) = Eigen::RowVector3d(100.0, 100.0, 100.0);

  const PointSet vel_pair = model.forward(near, pair_graph, 0.6);
  const PointSet vel_far = model.forward(with_far, triple_graph, 0.6);
  CHECK(max_abs_diff(vel_pair.coords, vel_far.coords.topRows(2)) == 0.0);
  CHECK(vel_far.coords.row(2).norm() == 0.0);
}

TEST_CASE("bonded pairs stay connected beyond the cutoff radius") {
  RandomStream rng(56);
  ModelConfig cfg = small_config();
  cfg.cutoff_radius = 2.0;
  VelocityModel model(cfg, rng);
  randomize_parameters(model.params(), rng);
  MolecularGraph g;
  g.atom_kinds = {0, 1};
  g.bonds = {{0, 1, 1}};
  PointSet x(CoordMatrix{{0.0, 0.0, 0.0}, {8.0, 0.0, 0.0}});
  const PointSet vel = model.forward(x, g, 0.5);
  CHECK(vel.coords.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("loss is zero with zero gradients when the target equals the output") {
  RandomStream rng(57);
  VelocityModel model(small_config(), rng);
  randomize_parameters(model.params(), rng);
  const MolecularGraph g = random_graph(5, rng);
  TrainItem item;
  item.x = random_points(5, rng, 1.5);
  item.t = 0.4;
  item.graph = &g;
  item.target = model.forward(item.x, g, item.t);

  const LossAndGrad lg = model.loss_and_grad(std::vector<TrainItem>{item});
  CHECK(lg.loss == 0.0);
  for (const Eigen::MatrixXd* g_tensor : param_tensors(lg.grads))
    CHECK(g_tensor->cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences everywhere") {
  RandomStream rng(58);
  const ModelConfig cfg = small_config();
  VelocityModel model(cfg, rng);
  randomize_parameters(model.params(), rng);

  std::vector<MolecularGraph> graphs;
  for (int n : {5, 6, 4}) graphs.push_back(random_graph(n, rng, cfg.n_atom_kinds));
  const std::vector<TrainItem> batch = random_batch(graphs, rng);

  const LossAndGrad lg = model.loss_and_grad(batch);
  CHECK(std::isfinite(lg.loss));

  const auto analytic = param_tensors(lg.grads);
  const auto tensors = param_tensors(model.params());
  const auto names = param_names(cfg);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Eigen::MatrixXd& tensor = *tensors[k];
    for (Eigen::Index idx = 0; idx < tensor.size(); ++idx) {
      const double saved = tensor.data()[idx];
      tensor.data()[idx] = saved + h;
      const double up = batch_loss(model, batch);
      tensor.data()[idx] = saved - h;
      const double down = batch_loss(model, batch);
      tensor.data()[idx] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[k]->data()[idx];
      const double rel =
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      if (rel > worst) worst = rel;
      if (rel > 1e-4) {
        CAPTURE(names[k]);
        CAPTURE(idx);
        CAPTURE(fd);
        CAPTURE(an);
        CHECK(rel <= 1e-4);
      }
    }
  }
  MESSAGE("max relative gradient error: ", worst);
  CHECK(worst <= 1e-4);
}

TEST_CASE("duplicating every batch item changes neither loss nor gradients") {
  RandomStream rng(59);
  VelocityModel model(small_config(), rng);
  randomize_parameters(model.params(), rng);
  std::vector<MolecularGraph> graphs;
  for (int n : {4, 5}) graphs.push_back(random_graph(n, rng));
  const std::vector<TrainItem> batch = random_batch(graphs, rng);
  std::vector<TrainItem> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());

  const LossAndGrad a = model.loss_and_grad(batch);
  const LossAndGrad b = model.loss_and_grad(doubled);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  const auto ga = param_tensors(a.grads);
  const auto gb = param_tensors(b.grads);
  for (std::size_t k = 0; k < ga.size(); ++k)
    CHECK((*ga[k] - *gb[k]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("loss computation is deterministic") {
  RandomStream rng(60);
  VelocityModel model(small_config(), rng);
  randomize_parameters(model.params(), rng);
  std::vector<MolecularGraph> graphs{random_graph(6, rng)};
  const std::vector<TrainItem> batch = random_batch(graphs, rng);
  CHECK(model.loss_and_grad(batch).loss == model.loss_and_grad(batch).loss);
}

TEST_CASE("optimizer: zero gradient leaves parameters unchanged") {
  Eigen::MatrixXd param = Eigen::MatrixXd::Constant(2, 2, 1.5);
  const Eigen::MatrixXd before = param;
  const Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(2, 2);
  AdamOptimizer opt(AdamConfig{0.1, 0.9, 0.999, 1e-8});
  opt.step({&param}, {&grad});
  CHECK(param == before);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("optimizer with zero decay rates degenerates to a plain step") {
  Eigen::MatrixXd param = Eigen::MatrixXd::Constant(1, 1, 1.0);
  const Eigen::MatrixXd grad = Eigen::MatrixXd::Constant(1, 1, 1.0);
  AdamOptimizer opt(AdamConfig{0.1, 0.0, 0.0, 1e-8});
  opt.step({&param}, {&grad});
  CHECK(param(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("optimizer descends a quadratic bowl monotonically") {
  RandomStream rng(61);
  Eigen::MatrixXd theta(3, 2);
  for (int i = 0; i < theta.size(); ++i) theta.data()[i] = rng.normal();
  AdamOptimizer opt(AdamConfig{0.05, 0.9, 0.999, 1e-8});
  double last = theta.squaredNorm();
  for (int step = 0; step < 100; ++step) {
    const Eigen::MatrixXd grad = 2.0 * theta;
    opt.step({&theta}, {&grad});
    const double value = theta.squaredNorm();
    CHECK(value < last);
    last = value;
  }
}

TEST_CASE("optimizer rejects non-finite gradients without touching parameters") {
  Eigen::MatrixXd param = Eigen::MatrixXd::Constant(2, 1, 3.0);
  const Eigen::MatrixXd before = param;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(2, 1);
  grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamOptimizer opt(AdamConfig{});
  CHECK_THROWS_AS(opt.step({&param}, {&grad}), NumericalError);
  CHECK(param == before);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("checkpoints round-trip bit exactly") {
  RandomStream rng(62);
  const ModelConfig cfg = small_config();
  VelocityModel model(cfg, rng);
  randomize_parameters(model.params(), rng);

  const auto path = std::filesystem::temp_directory_path() / "flowref_ckpt_test.json";
  save_checkpoint(path, model);
  const VelocityModel loaded = load_checkpoint(path);

  CHECK(loaded.config().feature_dim == cfg.feature_dim);
  CHECK(loaded.config().cutoff_radius == cfg.cutoff_radius);
  const auto orig = param_tensors(model.params());
  const auto back = param_tensors(loaded.params());
  REQUIRE(orig.size() == back.size());
  for (std::size_t k = 0; k < orig.size(); ++k) {
    REQUIRE(orig[k]->size() == back[k]->size());
    CHECK(std::memcmp(orig[k]->data(), back[k]->data(),
                      sizeof(double) * orig[k]->size()) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("loading a non-checkpoint file fails cleanly") {
  const auto path = std::filesystem::temp_directory_path() / "flowref_not_ckpt.json";
  {
    std::ofstream out(path);
    out << "{\"format\": \"something-else\"}\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("forward validates inputs") {
  RandomStream rng(63);
  VelocityModel model(small_config(), rng);
  const MolecularGraph g = random_graph(4, rng);
  CHECK_THROWS_AS(model.forward(random_points(5, rng), g, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(model.forward(random_points(4, rng), g, 1.5), std::invalid_argument);
  MolecularGraph bad = g;
  bad.atom_kinds[0] = 99;
  CHECK_THROWS_AS(model.forward(random_points(4, rng), bad, 0.5), std::invalid_argument);
}

TEST_SUITE_END();
