#include "ampflow/rng.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

namespace {

using ampflow::Rng;

TEST(Rng, SameSeedProducesSameStream) {
  Rng a(123456789);
  Rng b(123456789);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_gaussian(), b.next_gaussian());
  }
}

TEST(Rng, DifferentSeedsDiverge) {
  Rng a(1);
  Rng b(2);
  int agree = 0;
  for (int i = 0; i < 64; ++i) {
    if (a.next_u64() == b.next_u64()) ++agree;
  }
  EXPECT_EQ(agree, 0);
}

TEST(Rng, ChildDependsOnlyOnKeyNotDrawPosition) {
  Rng fresh(987);
  Rng drawn(987);
  for (int i = 0; i < 57; ++i) drawn.next_gaussian();
  for (std::uint64_t idx : {0ull, 1ull, 7ull, 1000000ull}) {
    Rng c1 = fresh.child(idx);
    Rng c2 = drawn.child(idx);
    EXPECT_EQ(c1.key(), c2.key());
    EXPECT_EQ(c1.next_u64(), c2.next_u64());
  }
}

TEST(Rng, ChildKeysDistinctFromEachOtherAndParent) {
  Rng root(42);
  std::set<std::uint64_t> keys;
  keys.insert(root.key());
  for (std::uint64_t i = 0; i < 200; ++i) {
    keys.insert(root.child(i).key());
  }
  EXPECT_EQ(keys.size(), 201u);
}

TEST(Rng, UniformLiesInHalfOpenUnitInterval) {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.next_uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LE(u, 1.0);
  }
}

TEST(Rng, GaussianMomentsMatchStandardNormal) {
  Rng rng(11);
  const int kDraws = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double g = rng.next_gaussian();
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / kDraws;
  const double var = sumsq / kDraws - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Rng, SphereVectorHasUnitNorm) {
  Rng rng(5);
  for (Eigen::Index n : {1, 2, 17, 300}) {
    const Eigen::VectorXd v = ampflow::unit_sphere_vector(rng, n);
    ASSERT_EQ(v.size(), n);
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  }
}

TEST(Rng, GaussianVectorIsDeterministic) {
  Rng a(314);
  Rng b(314);
  const Eigen::VectorXd va = ampflow::gaussian_vector(a, 64);
  const Eigen::VectorXd vb = ampflow::gaussian_vector(b, 64);
  EXPECT_TRUE(va == vb);
}

}  // namespace
