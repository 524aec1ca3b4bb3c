#include "flowref/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

namespace flowref {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

Histogram make_histogram(std::vector<double> samples, int n_bins) {
  if (samples.empty()) throw std::invalid_argument("histogram: no samples");
  if (n_bins < 1) throw std::invalid_argument("histogram: need at least one bin");

  std::sort(samples.begin(), samples.end());
  Histogram h;
  h.total = static_cast<std::int64_t>(samples.size());
  h.mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
           static_cast<double>(samples.size());
  h.median = quantile_sorted(samples, 0.5);
  h.p05 = quantile_sorted(samples, 0.05);
  h.p95 = quantile_sorted(samples, 0.95);

  double lo = samples.front();
  double hi = samples.back();
  if (hi - lo <= 0.0) hi = lo + std::max(1e-12, std::abs(lo) * 1e-9);
  const double width = (hi - lo) / n_bins;
  h.edges.resize(n_bins + 1);
  for (int b = 0; b <= n_bins; ++b) h.edges[b] = lo + width * b;
  h.edges.back() = hi;

  h.counts.assign(n_bins, 0);
  for (double v : samples) {
    int bin = static_cast<int>((v - lo) / width);
    bin = std::clamp(bin, 0, n_bins - 1);
    ++h.counts[bin];
  }
  return h;
}

std::vector<double> neighbor_degrees(const PointSet& points, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("neighbor_degrees: radius must be > 0");
  const Eigen::Index n = points.n_atoms();
  std::vector<double> degrees(n, 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if ((points.coords.row(i) - points.coords.row(j)).norm() <= radius) {
        degrees[i] += 1.0;
        degrees[j] += 1.0;
      }
  return degrees;
}

Histogram neighbor_degree_hist(const std::vector<PointSet>& states, double radius) {
  std::vector<double> all;
  for (const PointSet& s : states) {
    const std::vector<double> deg = neighbor_degrees(s, radius);
    all.insert(all.end(), deg.begin(), deg.end());
  }
  if (all.empty()) throw std::invalid_argument("neighbor_degree_hist: no states");

  // Integer-centered unit bins so each degree lands in its own bin.
  const int max_degree =
      static_cast<int>(*std::max_element(all.begin(), all.end()));
  Histogram h = make_histogram(all, 1);  // summary fields
  h.edges.clear();
  h.counts.assign(max_degree + 1, 0);
  for (int d = 0; d <= max_degree + 1; ++d) h.edges.push_back(d - 0.5);
  for (double v : all) ++h.counts[static_cast<int>(v)];
  return h;
}

PairPerturbationStats pair_perturbation_stats(const PointSet& x1, double sigma,
                                              int n_samples, RandomStream& rng) {
  if (n_samples < 2)
    throw std::invalid_argument("pair_perturbation_stats: need >= 2 samples");
  if (sigma < 0.0)
    throw std::invalid_argument("pair_perturbation_stats: sigma must be >= 0");
  const Eigen::Index n = x1.n_atoms();

  PairPerturbationStats out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.pairs.emplace_back(i, j);

  std::vector<double> sum_sq(out.pairs.size(), 0.0);
  for (int s = 0; s < n_samples; ++s) {
    const PointSet eps = gaussian_points(n, rng);
    for (std::size_t p = 0; p < out.pairs.size(); ++p) {
      const auto [i, j] = out.pairs[p];
      // delta r_ij = sigma * (eps_j - eps_i); the clean part cancels.
      const Vec3 delta =
          sigma * (eps.coords.row(j) - eps.coords.row(i)).transpose();
      sum_sq[p] += delta.squaredNorm();
    }
  }

  double pooled = 0.0;
  out.per_pair_std.resize(out.pairs.size());
  for (std::size_t p = 0; p < out.pairs.size(); ++p) {
    out.per_pair_std[p] = std::sqrt(sum_sq[p] / (3.0 * n_samples));
    pooled += sum_sq[p];
  }
  out.pooled_std = out.pairs.empty()
                       ? 0.0
                       : std::sqrt(pooled / (3.0 * n_samples * out.pairs.size()));
  return out;
}

std::vector<double> trajectory_speeds(const std::vector<Trajectory>& trajectories) {
  std::vector<double> speeds;
  for (const Trajectory& traj : trajectories)
    for (const TrajectoryPoint& pt : traj.points)
      for (Eigen::Index i = 0; i < pt.velocity.n_atoms(); ++i)
        speeds.push_back(pt.velocity.coords.row(i).norm());
  return speeds;
}

Histogram velocity_histogram(const std::vector<Trajectory>& trajectories, int n_bins) {
  if (trajectories.empty())
    throw std::invalid_argument("velocity_histogram: no trajectories");
  return make_histogram(trajectory_speeds(trajectories), n_bins);
}

std::vector<double> randomized_t_speeds(const VelocityModel& model,
                                        const MolecularGraph& graph,
                                        const std::vector<Trajectory>& trajectories,
                                        RandomStream& rng) {
  std::vector<double> speeds;
  for (const Trajectory& traj : trajectories)
    for (const TrajectoryPoint& pt : traj.points) {
      const PointSet vel = model.forward(pt.state, graph, rng.uniform());
      for (Eigen::Index i = 0; i < vel.n_atoms(); ++i)
        speeds.push_back(vel.coords.row(i).norm());
    }
  return speeds;
}

Histogram velocity_histogram_randomized(const VelocityModel& model,
                                        const MolecularGraph& graph,
                                        const std::vector<Trajectory>& trajectories,
                                        RandomStream& rng, int n_bins) {
  if (trajectories.empty())
    throw std::invalid_argument("velocity_histogram_randomized: no trajectories");
  return make_histogram(randomized_t_speeds(model, graph, trajectories, rng), n_bins);
}

std::vector<std::pair<double, double>> rmsd_trace(
    const Trajectory& trajectory, const std::vector<PointSet>& references) {
  if (references.empty()) throw std::invalid_argument("rmsd_trace: no references");
  std::vector<std::pair<double, double>> trace;
  trace.reserve(trajectory.points.size());
  for (const TrajectoryPoint& pt : trajectory.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const PointSet& ref : references)
      best = std::min(best, kabsch_align(pt.state, ref).rmsd);
    trace.emplace_back(pt.t, best);
  }
  return trace;
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write histogram: " + path.string());
  out << "# mean=" << hist.mean << " median=" << hist.median
      << " p05=" << hist.p05 << " p95=" << hist.p95 << " total=" << hist.total
      << '\n';
  out << "bin_lo,bin_hi,count\n";
  out << std::setprecision(10);
  for (std::size_t b = 0; b < hist.counts.size(); ++b)
    out << hist.edges[b] << ',' << hist.edges[b + 1] << ',' << hist.counts[b] << '\n';
}

}  // namespace flowref
