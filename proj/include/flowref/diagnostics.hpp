#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "flowref/model.hpp"
#include "flowref/pipeline.hpp"

namespace flowref {

struct Histogram {
  std::vector<double> edges;        // strictly increasing, counts.size() + 1
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
  double mean = 0.0;
  double median = 0.0;
  double p05 = 0.0;
  double p95 = 0.0;
};

/// Equal-width histogram over the sample range; summary statistics are
/// computed from the raw samples, not the binning.
Histogram make_histogram(std::vector<double> samples, int n_bins);

/// Per-atom neighbor counts |{ j != i : |r_ij| <= radius }|.
std::vector<double> neighbor_degrees(const PointSet& points, double radius);

/// Degree distribution pooled over all atoms of all states.
Histogram neighbor_degree_hist(const std::vector<PointSet>& states, double radius);

struct PairPerturbationStats {
  std::vector<std::pair<int, int>> pairs;  // i < j
  std::vector<double> per_pair_std;        // per-coordinate std of delta r_ij
  double pooled_std = 0.0;
};

/// Empirical per-coordinate spread of r_ij(t) - r_ij(1) when both endpoints
/// receive independent isotropic noise of scale sigma; the spread follows
/// sqrt(sigma_i^2 + sigma_j^2) = sqrt(2) * sigma.
PairPerturbationStats pair_perturbation_stats(const PointSet& x1, double sigma,
                                              int n_samples, RandomStream& rng);

/// Per-atom speeds pooled over all trajectory points.
std::vector<double> trajectory_speeds(const std::vector<Trajectory>& trajectories);

Histogram velocity_histogram(const std::vector<Trajectory>& trajectories,
                             int n_bins = 50);

/// Re-evaluates the field on the stored states at uniform-random t instead of
/// the scheduled t, then pools per-atom speeds.
std::vector<double> randomized_t_speeds(const VelocityModel& model,
                                        const MolecularGraph& graph,
                                        const std::vector<Trajectory>& trajectories,
                                        RandomStream& rng);

Histogram velocity_histogram_randomized(const VelocityModel& model,
                                        const MolecularGraph& graph,
                                        const std::vector<Trajectory>& trajectories,
                                        RandomStream& rng, int n_bins = 50);

/// Per-step best Kabsch RMSD against a reference ensemble.
std::vector<std::pair<double, double>> rmsd_trace(
    const Trajectory& trajectory, const std::vector<PointSet>& references);

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist);

}  // namespace flowref
