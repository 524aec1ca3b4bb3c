#include "flowref/geom.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace flowref {

PointSet gaussian_points(Eigen::Index n_atoms, RandomStream& rng) {
  CoordMatrix m(n_atoms, 3);
  for (Eigen::Index i = 0; i < n_atoms; ++i)
    for (Eigen::Index k = 0; k < 3; ++k) m(i, k) = rng.normal();
  return PointSet(std::move(m));
}

bool RigidTransform::is_rigid(const GeomTolerances& tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  const double ortho = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol.rotation_orthonormality &&
         std::abs(rotation.determinant() - 1.0) <= tol.rotation_determinant &&
         translation.allFinite();
}

PointSet center(const PointSet& p) {
  PointSet out = p;
  out.coords.rowwise() -= p.centroid().transpose();
  return out;
}

PointSet apply(const RigidTransform& xf, const PointSet& p) {
  PointSet out;
  out.coords = p.coords * xf.rotation.transpose();
  out.coords.rowwise() += xf.translation.transpose();
  return out;
}

RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
  RigidTransform out;
  out.rotation = second.rotation * first.rotation;
  out.translation = second.rotation * first.translation + second.translation;
  return out;
}

double rmsd(const PointSet& a, const PointSet& b) {
  if (a.n_atoms() != b.n_atoms())
    throw std::invalid_argument("rmsd: point sets differ in size");
  if (a.n_atoms() == 0) throw std::invalid_argument("rmsd: empty point set");
  const double ss = (a.coords - b.coords).squaredNorm();
  return std::sqrt(ss / static_cast<double>(a.n_atoms()));
}

AlignmentResult kabsch_align(const PointSet& mobile, const PointSet& reference) {
  if (mobile.n_atoms() != reference.n_atoms())
    throw std::invalid_argument("kabsch_align: point sets differ in size");
  if (mobile.n_atoms() == 0)
    throw std::invalid_argument("kabsch_align: empty point set");

  const Vec3 cm = mobile.centroid();
  const Vec3 cr = reference.centroid();
  const CoordMatrix pm = mobile.coords.rowwise() - cm.transpose();
  const CoordMatrix pr = reference.coords.rowwise() - cr.transpose();

  // Cross-covariance of centered sets; R minimizes |R p_i - q_i|.
  const Mat3 cov = pm.transpose() * pr;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  const Vec3 sing = svd.singularValues();

  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;  // reflection fix

  AlignmentResult res;
  res.transform.rotation = v * d * u.transpose();
  res.transform.translation = cr - res.transform.rotation * cm;
  res.degenerate = sing(1) <= kGeomTol.degenerate_singular * std::max(sing(0), 1.0);
  res.aligned = apply(res.transform, mobile);
  res.rmsd = rmsd(res.aligned, reference);
  return res;
}

Mat3 random_rotation(RandomStream& rng) {
  // Marsaglia: normalize a 4-vector of normals to a unit quaternion.
  Eigen::Vector4d q;
  do {
    for (int k = 0; k < 4; ++k) q(k) = rng.normal();
  } while (q.norm() < 1e-12);
  q.normalize();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

}  // namespace flowref
