#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>

#include "flowref/rng.hpp"

namespace flowref {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using CoordMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Numerical tolerances shared by the geometry routines.
struct GeomTolerances {
  double rotation_orthonormality = 1e-10;  // max |R^T R - I|
  double rotation_determinant = 1e-10;     // |det(R) - 1|
  double degenerate_singular = 1e-9;       // relative sigma2 cutoff for rank deficiency
  double centroid = 1e-12;
};

inline constexpr GeomTolerances kGeomTol{};

/// Raised when a computation hit or produced non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// N x 3 atom coordinates in Angstrom.
struct PointSet {
  CoordMatrix coords;

  PointSet() = default;
  explicit PointSet(CoordMatrix c) : coords(std::move(c)) {}

  Eigen::Index n_atoms() const { return coords.rows(); }
  bool all_finite() const { return coords.allFinite(); }
  Vec3 centroid() const { return coords.colwise().mean().transpose(); }

  static PointSet zero(Eigen::Index n_atoms) {
    return PointSet(CoordMatrix::Zero(n_atoms, 3));
  }
};

/// i.i.d. standard-normal coordinates, one draw per entry.
PointSet gaussian_points(Eigen::Index n_atoms, RandomStream& rng);

/// Proper rigid motion x -> R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  bool is_rigid(const GeomTolerances& tol = kGeomTol) const;
};

struct AlignmentResult {
  PointSet aligned;
  RigidTransform transform;
  double rmsd = 0.0;
  /// Rank-deficient cross-covariance (collinear or coincident points): the
  /// returned rotation is a valid minimizer but not unique.
  bool degenerate = false;
};

/// Translates p so its centroid is the origin. Pairwise distances unchanged.
PointSet center(const PointSet& p);

PointSet apply(const RigidTransform& xf, const PointSet& p);

/// compose(a, b): the transform equivalent to applying b first, then a.
RigidTransform compose(const RigidTransform& second, const RigidTransform& first);

/// Unaligned root-mean-square deviation, sqrt((1/N) sum_i |a_i - b_i|^2).
double rmsd(const PointSet& a, const PointSet& b);

/// Optimal proper rigid superposition of mobile onto reference (rotation from
/// the SVD of the cross-covariance, reflection corrected), plus the minimal
/// RMSD it achieves.
AlignmentResult kabsch_align(const PointSet& mobile, const PointSet& reference);

/// Rotation drawn uniformly from SO(3) (random unit quaternion).
Mat3 random_rotation(RandomStream& rng);

}  // namespace flowref
