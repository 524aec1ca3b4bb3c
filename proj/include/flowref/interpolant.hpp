#pragma once

#include "flowref/geom.hpp"
#include "flowref/rng.hpp"

namespace flowref {

enum class ScheduleKind { generator_gaussian, refiner_linear };

/// Interpolant coefficient triple (alpha, beta, s) with derivatives.
///
/// Both kinds use the linear path alpha(t) = 1 - t, beta(t) = t; the kind
/// records which base distribution the schedule is meant for (pure Gaussian
/// noise for the generator, data plus noise for the refiner). The optional
/// stochastic term is s(t) = sqrt(t(1-t)), which vanishes at both endpoints.
struct Schedule {
  ScheduleKind kind = ScheduleKind::refiner_linear;
  bool stochastic = false;

  double alpha(double t) const { return 1.0 - t; }
  double beta(double t) const { return t; }
  double s(double t) const { return stochastic ? std::sqrt(t * (1.0 - t)) : 0.0; }

  double alpha_prime(double) const { return -1.0; }
  double beta_prime(double) const { return 1.0; }
  double s_prime(double t) const {
    if (!stochastic) return 0.0;
    return (1.0 - 2.0 * t) / (2.0 * std::sqrt(t * (1.0 - t)));
  }

  static Schedule refiner(bool stochastic = false) {
    return Schedule{ScheduleKind::refiner_linear, stochastic};
  }
  static Schedule generator(bool stochastic = false) {
    return Schedule{ScheduleKind::generator_gaussian, stochastic};
  }
};

/// Training noise scale of the data-centered base x0 = x1 + sigma * eps.
struct RefinerBaseConfig {
  double sigma = 1.0;
};

/// One pair of independent standard-normal fields: eps perturbs the base
/// sample, z feeds the stochastic interpolant term.
struct NoiseDraw {
  PointSet epsilon;
  PointSet z;

  static NoiseDraw sample(Eigen::Index n_atoms, RandomStream& rng) {
    NoiseDraw d;
    d.epsilon = gaussian_points(n_atoms, rng);
    d.z = gaussian_points(n_atoms, rng);
    return d;
  }
};

struct RefinerBaseSample {
  PointSet x0;
  NoiseDraw noise;
};

/// Data-centered base draw x0 = x1 + sigma * eps.
RefinerBaseSample sample_refiner_base(const PointSet& x1,
                                      const RefinerBaseConfig& cfg,
                                      RandomStream& rng);

/// x_t = alpha(t) x0 + beta(t) x1 + s(t) z.
PointSet interpolate(const PointSet& x0, const PointSet& x1, double t,
                     const Schedule& sched, const NoiseDraw& noise);

/// u_t = alpha'(t) x0 + beta'(t) x1 + s'(t) z. For the deterministic linear
/// path this is x1 - x0. Undefined at t in {0,1} when the schedule is
/// stochastic (s' diverges).
PointSet target_velocity(const PointSet& x0, const PointSet& x1,
                         const NoiseDraw& noise, double t,
                         const Schedule& sched);

/// Flow time t* at which the scheduled noise (1-t) sigma matches an upstream
/// error scale sigma*: t* = 1 - sigma*/sigma.
double self_calibration_time(double sigma_star, double sigma);

/// Quantile bound on the RMSD of an isotropic Gaussian perturbation of scale
/// sigma* on N atoms, using the Wilson-Hilferty cube-root normal
/// approximation of the chi-square with d = 3N - 6 degrees of freedom:
///
///   sigma* * sqrt( (d/N) * (1 - 2/(9d) + q_k * sqrt(2/(9d)))^3 )
///
/// q_k is a standard-normal quantile (1.96 for the 97.5th percentile).
double wh_rmsd_quantile(int n_atoms, double sigma_star, double q_k);

/// One Monte-Carlo draw of sigma* * sqrt(chi2_{3N-6} / N), the RMSD of an
/// isotropic perturbation restricted to the non-rigid subspace.
double sample_rmsd_chi(int n_atoms, double sigma_star, RandomStream& rng);

}  // namespace flowref
