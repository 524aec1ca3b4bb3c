#include <cmath>
#include <limits>

#include "doctest.h"
#include "flowref/geom.hpp"
#include "test_util.hpp"

using namespace flowref;
using namespace testutil;

TEST_SUITE_BEGIN("geom");

TEST_CASE("center moves a single point to the origin") {
  PointSet p(CoordMatrix{{5.0, 5.0, 5.0}});
  const PointSet c = center(p);
  CHECK(c.coords.row(0).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("center is idempotent on a centered set") {
  RandomStream rng(11);
  const PointSet p = center(random_points(6, rng));
  const PointSet again = center(p);
  CHECK(max_abs_diff(p.coords, again.coords) < 1e-14);
}

TEST_CASE("center preserves pairwise distances and zeroes the centroid") {
  RandomStream rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSet p = random_points(3, rng, 3.0);
    const PointSet c = center(p);
    CHECK(c.centroid().norm() < 1e-12);
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        const double before = (p.coords.row(i) - p.coords.row(j)).norm();
        const double after = (c.coords.row(i) - c.coords.row(j)).norm();
        CHECK(std::abs(before - after) < 1e-12);
      }
  }
}

TEST_CASE("rmsd on identical sets is zero") {
  RandomStream rng(13);
  const PointSet p = random_points(5, rng);
  CHECK(rmsd(p, p) == 0.0);
}

TEST_CASE("rmsd of one point pair is the Euclidean distance") {
  PointSet a(CoordMatrix{{0.0, 0.0, 0.0}});
  PointSet b(CoordMatrix{{3.0, 4.0, 0.0}});
  CHECK(rmsd(a, b) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("rmsd matches elementwise recomputation") {
  RandomStream rng(14);
  const PointSet a = random_points(7, rng);
  const PointSet b = random_points(7, rng);
  double ss = 0.0;
  for (int i = 0; i < 7; ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = a.coords(i, c) - b.coords(i, c);
      ss += d * d;
    }
  CHECK(std::abs(rmsd(a, b) - std::sqrt(ss / 7.0)) < 1e-12);
}

TEST_CASE("rmsd rejects mismatched sizes") {
  RandomStream rng(15);
  const PointSet a = random_points(4, rng);
  const PointSet b = random_points(5, rng);
  CHECK_THROWS_AS(rmsd(a, b), std::invalid_argument);
}

TEST_CASE("apply with the identity leaves points unchanged") {
  RandomStream rng(16);
  const PointSet p = random_points(5, rng);
  const PointSet q = apply(RigidTransform{}, p);
  CHECK(max_abs_diff(p.coords, q.coords) == 0.0);
}

TEST_CASE("apply rotates (1,0,0) to (-1,0,0) under a 180 degree z rotation") {
  RigidTransform xf;
  xf.rotation = Eigen::AngleAxisd(M_PI, Vec3::UnitZ()).toRotationMatrix();
  PointSet p(CoordMatrix{{1.0, 0.0, 0.0}});
  const PointSet q = apply(xf, p);
  CHECK(std::abs(q.coords(0, 0) + 1.0) < 1e-15);
  CHECK(std::abs(q.coords(0, 1)) < 1e-15);
}

TEST_CASE("apply preserves pairwise distances") {
  RandomStream rng(17);
  const PointSet p = random_points(6, rng, 2.0);
  const PointSet q = apply(random_rigid(rng), p);
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      const double before = (p.coords.row(i) - p.coords.row(j)).norm();
      const double after = (q.coords.row(i) - q.coords.row(j)).norm();
      CHECK(std::abs(before - after) < 1e-12);
    }
}

TEST_CASE("applying two transforms equals applying their composition") {
  RandomStream rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSet p = random_points(5, rng);
    const RigidTransform xf1 = random_rigid(rng);
    const RigidTransform xf2 = random_rigid(rng);
    const PointSet two_steps = apply(xf2, apply(xf1, p));
    const PointSet one_step = apply(compose(xf2, xf1), p);
    CHECK(max_abs_diff(two_steps.coords, one_step.coords) < 1e-12);
  }
}

TEST_CASE("aligning a set to itself gives zero rmsd and the identity") {
  RandomStream rng(19);
  const PointSet p = random_points(5, rng);
  const AlignmentResult res = kabsch_align(p, p);
  CHECK(res.rmsd < 1e-12);
  CHECK((res.transform.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(res.transform.translation.norm() < 1e-10);
  CHECK_FALSE(res.degenerate);
}

TEST_CASE("an exact rigid copy is recovered to 1e-10") {
  RandomStream rng(20);
  const PointSet ref = random_points(6, rng, 2.0);
  RigidTransform xf;
  xf.rotation = Eigen::AngleAxisd(M_PI / 2.0, Vec3::UnitZ()).toRotationMatrix();
  xf.translation = Vec3(1.0, 2.0, 3.0);
  const AlignmentResult res = kabsch_align(apply(xf, ref), ref);
  CHECK(res.rmsd < 1e-10);
  CHECK(res.transform.is_rigid());
}

TEST_CASE("alignment is optimal against a random-rotation brute force") {
  RandomStream rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const PointSet mobile = random_points(5, rng);
    const PointSet reference = random_points(5, rng);
    const AlignmentResult res = kabsch_align(mobile, reference);

    // Brute force: rotation sampled uniformly, translation chosen optimally
    // (centroid match).
    const PointSet mob_c = center(mobile);
    const PointSet ref_c = center(reference);
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < 100000; ++s) {
      RigidTransform cand;
      cand.rotation = random_rotation(rng);
      const double value = rmsd(apply(cand, mob_c), ref_c);
      best = std::min(best, value);
      if (value < res.rmsd - 1e-12) FAIL("sampled rotation beat the closed form");
    }
    CHECK(best - res.rmsd >= -1e-12);
    CHECK(best - res.rmsd < 1e-3);
  }
}

TEST_CASE("alignment never returns a reflection for mirrored chiral sets") {
  RandomStream rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const PointSet p = center(random_points(5, rng));
    PointSet mirrored = p;
    mirrored.coords.col(0) *= -1.0;
    const AlignmentResult res = kabsch_align(mirrored, p);
    CHECK(res.transform.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.rmsd > 1e-6);  // a generic random set is chiral
  }
}

TEST_CASE("aligned rmsd never exceeds the unaligned rmsd") {
  RandomStream rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const PointSet a = random_points(6, rng);
    const PointSet b = random_points(6, rng);
    CHECK(kabsch_align(a, b).rmsd <= rmsd(a, b) + 1e-12);
  }
}

TEST_CASE("alignment rmsd is invariant to rigid motion of the mobile set") {
  RandomStream rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const PointSet mobile = random_points(5, rng);
    const PointSet reference = random_points(5, rng);
    const double base = kabsch_align(mobile, reference).rmsd;
    const double moved = kabsch_align(apply(random_rigid(rng), mobile), reference).rmsd;
    CHECK(std::abs(base - moved) < 1e-10);
  }
}

TEST_CASE("degenerate inputs are flagged but still yield proper rotations") {
  SUBCASE("collinear points") {
    CoordMatrix m(3, 3);
    m << 0, 0, 0, 1, 0, 0, 2, 0, 0;
    const AlignmentResult res = kabsch_align(PointSet(m), PointSet(m));
    CHECK(res.degenerate);
    CHECK(res.transform.is_rigid());
    CHECK(res.rmsd < 1e-12);
  }
  SUBCASE("coincident points") {
    CoordMatrix m = CoordMatrix::Zero(4, 3);
    m.rowwise() = Eigen::RowVector3d(1.0, 2.0, 3.0);
    const AlignmentResult res = kabsch_align(PointSet(m), PointSet(m));
    CHECK(res.degenerate);
    CHECK(res.transform.is_rigid());
  }
  SUBCASE("single point aligns exactly") {
    PointSet a(CoordMatrix{{1.0, 2.0, 3.0}});
    PointSet b(CoordMatrix{{-4.0, 0.0, 2.0}});
    const AlignmentResult res = kabsch_align(a, b);
    CHECK(res.degenerate);
    CHECK(res.rmsd < 1e-12);
  }
  SUBCASE("planar points are not degenerate") {
    RandomStream rng(25);
    CoordMatrix m(4, 3);
    for (int i = 0; i < 4; ++i)
      m.row(i) = Eigen::RowVector3d(rng.normal(), rng.normal(), 0.0);
    CHECK_FALSE(kabsch_align(PointSet(m), PointSet(m)).degenerate);
  }
}

TEST_CASE("alignment rejects mismatched sizes") {
  RandomStream rng(26);
  CHECK_THROWS_AS(kabsch_align(random_points(4, rng), random_points(5, rng)),
                  std::invalid_argument);
}

TEST_CASE("random rotations are proper") {
  RandomStream rng(27);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 r = random_rotation(rng);
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_SUITE_END();
