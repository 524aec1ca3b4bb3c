#include "flowref/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "flowref/data.hpp"

namespace flowref {

void TrainConfig::validate() const {
  if (sigma <= 0.0) throw std::invalid_argument("train config: sigma must be > 0");
  if (epochs < 0) throw std::invalid_argument("train config: negative epochs");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (learning_rate < 0.0) throw std::invalid_argument("train config: negative learning rate");
  if (endpoint_band <= 0.0 || endpoint_band >= 0.5)
    throw std::invalid_argument("train config: endpoint band outside (0, 0.5)");
}

namespace {

double sample_time(const Schedule& sched, double band, RandomStream& rng) {
  const double u = rng.uniform();
  if (!sched.stochastic) return u;
  return band + u * (1.0 - 2.0 * band);  // keep clear of the s' singularity
}

}  // namespace

TrainResult train_model(VelocityModel& model,
                        const std::vector<MoleculeRecord>& dataset,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const MoleculeRecord& rec : dataset) rec.validate();

  RandomStream rng = RandomStream(cfg.seed).derive(0x7261696e);
  AdamOptimizer opt(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  auto tensors = param_tensors(model.params());

  const bool data_centered_base =
      cfg.schedule.kind == ScheduleKind::refiner_linear;

  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<TrainItem> items;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t seen = 0;

    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      items.clear();
      for (std::size_t k = begin; k < end; ++k) {
        const MoleculeRecord& rec = dataset[order[k]];
        const PointSet x1 =
            center(rec.references[rng.integer(rec.references.size())]);
        NoiseDraw noise = NoiseDraw::sample(x1.n_atoms(), rng);

        PointSet x0;
        if (data_centered_base)
          x0.coords = x1.coords + cfg.sigma * noise.epsilon.coords;
        else
          x0.coords = cfg.sigma * noise.epsilon.coords;
        if (cfg.align_base) x0 = kabsch_align(x0, x1).aligned;

        const double t = sample_time(cfg.schedule, cfg.endpoint_band, rng);
        TrainItem item;
        item.x = interpolate(x0, x1, t, cfg.schedule, noise);
        item.t = t;
        item.graph = &rec.graph;
        item.target = target_velocity(x0, x1, noise, t, cfg.schedule);
        items.push_back(std::move(item));
      }

      LossAndGrad lg = model.loss_and_grad(items);
      if (!std::isfinite(lg.loss)) {
        std::ostringstream msg;
        msg << "training loss non-finite at epoch " << epoch << ", batch "
            << begin / cfg.batch_size << ", molecule "
            << dataset[order[begin]].id;
        throw NumericalError(msg.str());
      }
      try {
        opt.step(tensors, param_tensors(std::as_const(lg.grads)));
      } catch (const NumericalError& err) {
        std::ostringstream msg;
        msg << err.what() << " (epoch " << epoch << ", batch "
            << begin / cfg.batch_size << ", molecule "
            << dataset[order[begin]].id << ")";
        throw NumericalError(msg.str());
      }
      loss_sum += lg.loss * static_cast<double>(items.size());
      seen += items.size();
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  return result;
}

std::vector<double> SampleConfig::resolve_times() const {
  if (!times.empty()) {
    if (times.size() < 2 || times.front() != 0.0 || times.back() != 1.0)
      throw std::invalid_argument("sample config: schedule must run from 0 to 1");
    for (std::size_t k = 1; k < times.size(); ++k)
      if (times[k] <= times[k - 1])
        throw std::invalid_argument("sample config: times must be strictly increasing");
    return times;
  }
  if (n_steps < 1) throw std::invalid_argument("sample config: need at least one step");
  std::vector<double> grid(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k)
    grid[k] = static_cast<double>(k) / static_cast<double>(n_steps);
  grid.back() = 1.0;
  return grid;
}

PointSet euler_integrate(const VelocityField& field, const PointSet& x0,
                         const std::vector<double>& times, Trajectory* trajectory) {
  if (times.size() < 2)
    throw std::invalid_argument("euler_integrate: need at least two time points");
  const Vec3 start_centroid = x0.centroid();

  auto record = [&](double t, const PointSet& state, const PointSet& vel) {
    if (!trajectory) return;
    TrajectoryPoint pt;
    pt.t = t;
    pt.state = state;
    pt.velocity = vel;
    pt.mean_speed = vel.coords.rowwise().norm().mean();
    pt.centroid_drift = (state.centroid() - start_centroid).norm();
    trajectory->points.push_back(std::move(pt));
  };

  PointSet x = x0;
  for (std::size_t n = 0; n + 1 < times.size(); ++n) {
    const PointSet vel = field(x, times[n]);
    record(times[n], x, vel);
    x.coords += (times[n + 1] - times[n]) * vel.coords;
    if (!x.all_finite()) {
      std::ostringstream msg;
      msg << "euler_integrate: non-finite state after step " << n << " (t="
          << times[n + 1] << ")";
      throw NumericalError(msg.str());
    }
  }
  record(times.back(), x, field(x, times.back()));
  return x;
}

RefineResult refine(const VelocityModel& model, const PointSet& x_hat,
                    const MolecularGraph& graph, const SampleConfig& cfg) {
  const std::vector<double> grid = cfg.resolve_times();
  RefineResult out;
  Trajectory traj;
  const VelocityField field = [&](const PointSet& x, double t) {
    return model.forward(x, graph, t);
  };
  out.refined =
      euler_integrate(field, x_hat, grid, cfg.capture_trajectory ? &traj : nullptr);
  if (cfg.capture_trajectory) out.trajectory = std::move(traj);
  return out;
}

RefineResult generate_from_noise(const VelocityModel& generator,
                                 const MolecularGraph& graph,
                                 const SampleConfig& cfg, double sigma_base,
                                 RandomStream& rng) {
  if (sigma_base < 0.0)
    throw std::invalid_argument("generate_from_noise: sigma must be >= 0");
  PointSet x0 = gaussian_points(graph.n_atoms(), rng);
  x0.coords *= sigma_base;
  return refine(generator, x0, graph, cfg);
}

std::vector<RefineResult> refine_ensemble(const VelocityModel& model,
                                          const std::vector<PointSet>& upstream,
                                          const MolecularGraph& graph,
                                          const SampleConfig& cfg) {
  std::vector<RefineResult> out;
  out.reserve(upstream.size());
  for (std::size_t k = 0; k < upstream.size(); ++k) {
    try {
      out.push_back(refine(model, upstream[k], graph, cfg));
    } catch (const std::exception& err) {
      std::ostringstream msg;
      msg << "conformer " << k << ": " << err.what();
      throw NumericalError(msg.str());
    }
  }
  return out;
}

std::vector<std::vector<RefineResult>> refine_ensembles(
    const VelocityModel& model, const std::vector<MoleculeRecord>& records,
    const std::vector<std::vector<PointSet>>& upstream, const SampleConfig& cfg,
    int jobs) {
  if (records.size() != upstream.size())
    throw std::invalid_argument("refine_ensembles: record/ensemble count mismatch");

  std::vector<std::vector<RefineResult>> out(records.size());
  auto run_one = [&](std::size_t m) {
    try {
      out[m] = refine_ensemble(model, upstream[m], records[m].graph, cfg);
    } catch (const std::exception& err) {
      std::ostringstream msg;
      msg << "molecule " << records[m].id << ": " << err.what();
      throw NumericalError(msg.str());
    }
  };

  if (jobs <= 1) {
    for (std::size_t m = 0; m < records.size(); ++m) run_one(m);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  const int n_workers = std::min<int>(jobs, static_cast<int>(records.size()));
  for (int w = 0; w < n_workers; ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t m = next.fetch_add(1); m < records.size();
           m = next.fetch_add(1))
        run_one(m);
    }));
  }
  for (auto& f : workers) f.get();
  return out;
}

}  // namespace flowref
