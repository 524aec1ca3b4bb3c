#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "flowref/interpolant.hpp"
#include "flowref/model.hpp"

namespace flowref {

struct MoleculeRecord;  // data.hpp

struct TrainConfig {
  double sigma = 1.0;  // base noise scale (refiner perturbation / generator prior)
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 4e-3;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::refiner();
  bool align_base = true;       // Kabsch-align x0 onto x1 before interpolating
  double endpoint_band = 1e-3;  // t-sampling margin under stochastic schedules

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// Flow-matching regression: per sample draw a reference conformer x1, a base
/// draw x0 (data-centered for the refiner schedule, pure noise scaled by
/// sigma for the generator schedule), optionally align x0 onto x1, then
/// regress the model on (x_t, t) -> u_t. Aborts with epoch/batch/molecule
/// context if the loss turns non-finite.
TrainResult train_model(VelocityModel& model,
                        const std::vector<MoleculeRecord>& dataset,
                        const TrainConfig& cfg);

struct SampleConfig {
  int n_steps = 20;
  std::vector<double> times;  // optional explicit schedule, t_0=0 .. t_N=1
  bool capture_trajectory = false;

  /// Resolved step schedule (uniform when `times` is empty).
  std::vector<double> resolve_times() const;
};

struct TrajectoryPoint {
  double t = 0.0;
  PointSet state;
  PointSet velocity;          // field evaluated at (state, t)
  double mean_speed = 0.0;    // mean per-atom |velocity|, Angstrom per unit t
  double centroid_drift = 0.0;  // |centroid(state) - centroid(initial state)|
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;  // n_steps + 1 entries
};

struct RefineResult {
  PointSet refined;
  std::optional<Trajectory> trajectory;
};

using VelocityField = std::function<PointSet(const PointSet&, double)>;

/// Forward Euler for dx/dt = u(x, t) over the given time grid. Throws
/// NumericalError naming the step index if the state turns non-finite.
PointSet euler_integrate(const VelocityField& field, const PointSet& x0,
                         const std::vector<double>& times,
                         Trajectory* trajectory = nullptr);

/// Integrates the model field from x_hat at t=0 to t=1. Deterministic given
/// model and input.
RefineResult refine(const VelocityModel& model, const PointSet& x_hat,
                    const MolecularGraph& graph, const SampleConfig& cfg);

/// Draws x0 = sigma_base * eps and integrates the generator field; the toy
/// upstream producer.
RefineResult generate_from_noise(const VelocityModel& generator,
                                 const MolecularGraph& graph,
                                 const SampleConfig& cfg, double sigma_base,
                                 RandomStream& rng);

/// Refines one ensemble; output order matches input order (one-to-one
/// pairing). Errors gain the conformer index.
std::vector<RefineResult> refine_ensemble(const VelocityModel& model,
                                          const std::vector<PointSet>& upstream,
                                          const MolecularGraph& graph,
                                          const SampleConfig& cfg);

/// Refines per-molecule ensembles, optionally in parallel; results are
/// indexed, so the output does not depend on scheduling. Errors gain the
/// molecule id and conformer index.
std::vector<std::vector<RefineResult>> refine_ensembles(
    const VelocityModel& model, const std::vector<MoleculeRecord>& records,
    const std::vector<std::vector<PointSet>>& upstream, const SampleConfig& cfg,
    int jobs = 1);

}  // namespace flowref
