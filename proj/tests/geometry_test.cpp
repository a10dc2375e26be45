#include <gtest/gtest.h>

#include <cmath>

#include "frea/geometry.hpp"
#include "frea/rng.hpp"

using namespace frea;

TEST(Angle, NormalizeRange) {
  EXPECT_DOUBLE_EQ(normalize_angle(0.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3.0 * kPi), kPi, 1e-12);
  EXPECT_NEAR(normalize_angle(-0.5), -0.5, 1e-15);
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50.0, 50.0);
    const double r = normalize_angle(a);
    EXPECT_GT(r, -kPi);
    EXPECT_LE(r, kPi);
    EXPECT_NEAR(std::sin(r), std::sin(a), 1e-9);
    EXPECT_NEAR(std::cos(r), std::cos(a), 1e-9);
  }
}

TEST(BoxDistance, FaceToFaceGap) {
  OrientedBox a{{0.0, 0.0}, 0.0, 1.0, 1.0};
  OrientedBox b{{5.0, 0.0}, 0.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(min_box_distance(a, b), 3.0);
}

TEST(BoxDistance, OverlapIsZero) {
  OrientedBox a{{0.0, 0.0}, 0.0, 1.0, 1.0};
  OrientedBox b{{1.5, 0.5}, 0.3, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(min_box_distance(a, b), 0.0);
  // Full containment without edge crossings.
  OrientedBox outer{{0.0, 0.0}, 0.0, 5.0, 5.0};
  OrientedBox inner{{0.5, -0.3}, 0.7, 1.0, 0.5};
  EXPECT_DOUBLE_EQ(min_box_distance(outer, inner), 0.0);
}

// Independent oracle: densely sample one rectangle's boundary and take the
// exact point-to-rectangle distance to the other, in both directions.
static double sampled_box_distance(const OrientedBox& a, const OrientedBox& b,
                                   int per_edge) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto* first : {&a, &b}) {
    const auto* second = (first == &a) ? &b : &a;
    const auto corners = first->corners();
    for (int e = 0; e < 4; ++e) {
      const Vec2 p0 = corners[e];
      const Vec2 p1 = corners[(e + 1) % 4];
      for (int k = 0; k <= per_edge; ++k) {
        const double t = static_cast<double>(k) / per_edge;
        best = std::min(best, point_box_distance(p0 + (p1 - p0) * t, *second));
      }
    }
  }
  return best;
}

TEST(BoxDistance, RotatedAgainstSamplingOracle) {
  OrientedBox a{{0.0, 0.0}, 0.0, 1.0, 1.0};
  OrientedBox b{{4.0, 0.0}, kPi / 4.0, 1.0, 1.0};
  const double expected = sampled_box_distance(a, b, 10000);
  EXPECT_NEAR(min_box_distance(a, b), expected, 1e-3);
  EXPECT_LE(min_box_distance(a, b), expected + 1e-12);  // oracle upper-bounds
}

TEST(BoxDistance, SymmetricNonNegativeAndConsistentWithIntersection) {
  Rng rng(123);
  for (int i = 0; i < 500; ++i) {
    OrientedBox a{{rng.uniform(-5, 5), rng.uniform(-5, 5)},
                  rng.uniform(-kPi, kPi), rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5)};
    OrientedBox b{{rng.uniform(-5, 5), rng.uniform(-5, 5)},
                  rng.uniform(-kPi, kPi), rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5)};
    const double dab = min_box_distance(a, b);
    const double dba = min_box_distance(b, a);
    EXPECT_DOUBLE_EQ(dab, dba);
    EXPECT_GE(dab, 0.0);
    EXPECT_EQ(dab == 0.0, boxes_intersect(a, b));
  }
}

TEST(BoxDistance, RandomPairsAgainstSamplingOracle) {
  Rng rng(99);
  for (int i = 0; i < 25; ++i) {
    OrientedBox a{{rng.uniform(-5, 5), rng.uniform(-5, 5)},
                  rng.uniform(-kPi, kPi), rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5)};
    OrientedBox b{{rng.uniform(-5, 5), rng.uniform(-5, 5)},
                  rng.uniform(-kPi, kPi), rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5)};
    const double expected = sampled_box_distance(a, b, 2000);
    EXPECT_NEAR(min_box_distance(a, b), expected, 2e-3);
  }
}

TEST(Polyline, ArcLengthQueries) {
  Polyline p({{0.0, 0.0}, {10.0, 0.0}, {10.0, 5.0}});
  EXPECT_DOUBLE_EQ(p.length(), 15.0);
  EXPECT_EQ(p.point_at(5.0), (Vec2{5.0, 0.0}));
  EXPECT_EQ(p.point_at(12.0), (Vec2{10.0, 2.0}));
  EXPECT_EQ(p.point_at(100.0), (Vec2{10.0, 5.0}));
  EXPECT_EQ(p.tangent_at(1.0), (Vec2{1.0, 0.0}));
  EXPECT_EQ(p.tangent_at(11.0), (Vec2{0.0, 1.0}));

  const auto proj = p.project({4.0, 3.0});
  EXPECT_DOUBLE_EQ(proj.s, 4.0);
  EXPECT_DOUBLE_EQ(proj.lateral, 3.0);
  const auto corner = p.project({12.0, -1.0});
  EXPECT_DOUBLE_EQ(corner.s, 10.0);
}
