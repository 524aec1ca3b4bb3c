#include "flowref/interpolant.hpp"

#include <cmath>

namespace flowref {

RefinerBaseSample sample_refiner_base(const PointSet& x1,
                                      const RefinerBaseConfig& cfg,
                                      RandomStream& rng) {
  if (cfg.sigma < 0.0)
    throw std::invalid_argument("sample_refiner_base: sigma must be >= 0");
  if (!x1.all_finite())
    throw std::invalid_argument("sample_refiner_base: non-finite input");
  RefinerBaseSample out;
  out.noise = NoiseDraw::sample(x1.n_atoms(), rng);
  out.x0.coords = x1.coords + cfg.sigma * out.noise.epsilon.coords;
  return out;
}

PointSet interpolate(const PointSet& x0, const PointSet& x1, double t,
                     const Schedule& sched, const NoiseDraw& noise) {
  if (x0.n_atoms() != x1.n_atoms())
    throw std::invalid_argument("interpolate: shape mismatch between x0 and x1");
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("interpolate: t outside [0,1]");
  PointSet xt;
  xt.coords = sched.alpha(t) * x0.coords + sched.beta(t) * x1.coords;
  const double st = sched.s(t);
  if (st != 0.0) {
    if (noise.z.n_atoms() != x0.n_atoms())
      throw std::invalid_argument("interpolate: z shape mismatch");
    xt.coords += st * noise.z.coords;
  }
  return xt;
}

PointSet target_velocity(const PointSet& x0, const PointSet& x1,
                         const NoiseDraw& noise, double t,
                         const Schedule& sched) {
  if (x0.n_atoms() != x1.n_atoms())
    throw std::invalid_argument("target_velocity: shape mismatch");
  if (sched.stochastic && (t <= 0.0 || t >= 1.0))
    throw std::invalid_argument("target_velocity: velocity undefined at endpoint");
  PointSet u;
  u.coords = sched.alpha_prime(t) * x0.coords + sched.beta_prime(t) * x1.coords;
  if (sched.stochastic) {
    if (noise.z.n_atoms() != x0.n_atoms())
      throw std::invalid_argument("target_velocity: z shape mismatch");
    u.coords += sched.s_prime(t) * noise.z.coords;
  }
  return u;
}

double self_calibration_time(double sigma_star, double sigma) {
  if (sigma <= 0.0)
    throw std::invalid_argument("self_calibration_time: sigma must be > 0");
  if (sigma_star < 0.0)
    throw std::invalid_argument("self_calibration_time: sigma* must be >= 0");
  if (sigma_star > sigma)
    throw std::invalid_argument(
        "self_calibration_time: upstream noise exceeds refiner coverage");
  return 1.0 - sigma_star / sigma;
}

double wh_rmsd_quantile(int n_atoms, double sigma_star, double q_k) {
  if (n_atoms < 3)
    throw std::invalid_argument("wh_rmsd_quantile: need at least 3 atoms");
  if (sigma_star < 0.0)
    throw std::invalid_argument("wh_rmsd_quantile: sigma* must be >= 0");
  const double d = 3.0 * n_atoms - 6.0;
  const double c = 2.0 / (9.0 * d);
  const double core = 1.0 - c + q_k * std::sqrt(c);
  return sigma_star * std::sqrt(d / n_atoms * core * core * core);
}

double sample_rmsd_chi(int n_atoms, double sigma_star, RandomStream& rng) {
  if (n_atoms < 3)
    throw std::invalid_argument("sample_rmsd_chi: need at least 3 atoms");
  const double d = 3.0 * n_atoms - 6.0;
  const double chi2 = std::chi_squared_distribution<double>(d)(rng.engine());
  return sigma_star * std::sqrt(chi2 / n_atoms);
}

}  // namespace flowref
