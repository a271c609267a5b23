#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <vector>

#include "swarmtrack/core.hpp"
#include "swarmtrack/errors.hpp"

using namespace swarmtrack;

TEST_CASE("action indices map onto speed-major primitives") {
  CHECK(action_from_index(0) == ActionPrimitive{0.0, -kPi / 4});
  CHECK(action_from_index(11) == ActionPrimitive{2.0, kPi / 4});
  CHECK(action_from_index(4) == ActionPrimitive{0.67, 0.0});
  for (int i = 0; i < kNumActions; ++i) CHECK(index_of(action_from_index(i)) == i);
  CHECK_THROWS_AS(action_from_index(12), InvalidArgument);
  CHECK_THROWS_AS(action_from_index(-1), InvalidArgument);
  CHECK_THROWS_AS(index_of({1.0, 0.0}), InvalidArgument);
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3 * kPi) == doctest::Approx(kPi).epsilon(1e-12));
  CHECK(wrap_angle(-3 * kPi / 2) == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK_THROWS_AS(wrap_angle(std::nan("")), InvalidArgument);
  CHECK_THROWS_AS(wrap_angle(INFINITY), InvalidArgument);
}

TEST_CASE("unicycle steps") {
  const Pose2 p = step_unicycle({0, 0, 0}, {2.0, 0.0}, 0.5);
  CHECK(p.x == doctest::Approx(1.0));
  CHECK(p.y == doctest::Approx(0.0));
  CHECK(p.heading == doctest::Approx(0.0));

  const Pose2 q = step_unicycle({0, 0, 0}, {0.0, kPi / 4}, 0.5);
  CHECK(q.x == 0.0);
  CHECK(q.heading == doctest::Approx(kPi / 8));

  const Pose2 r{3.5, -2.0, 1.2};
  CHECK(step_unicycle(r, {0.0, 0.0}, 0.5) == r);
  CHECK_THROWS_AS(step_unicycle(r, {0.0, 0.0}, 0.0), InvalidArgument);
}

TEST_CASE("global_to_local_polar") {
  const Polar a = global_to_local_polar({0, 0, 0}, 3, 4);
  CHECK(a.range == doctest::Approx(5.0));
  CHECK(a.bearing == doctest::Approx(std::atan2(4.0, 3.0)));

  const Polar b = global_to_local_polar({1, 1, kPi / 2}, 1, 3);
  CHECK(b.range == doctest::Approx(2.0));
  CHECK(b.bearing == doctest::Approx(0.0).epsilon(1e-12));

  const Polar c = global_to_local_polar({2, -1, 0.3}, 2, -1);
  CHECK(c.range == 0.0);
  CHECK(c.bearing == 0.0);
}

TEST_CASE("seeded streams are reproducible and independent") {
  SeededStream a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  const SeededStream root(7);
  CHECK(root.derive(1, 2) == root.derive(1, 2));
  CHECK(root.derive(1, 2).key() != root.derive(1, 3).key());
  CHECK(root.derive(1, 0).key() != root.derive(2, 0).key());
}

TEST_CASE("uniform_int passes a chi-squared uniformity test") {
  SeededStream s(3);
  constexpr int kBins = 12;
  constexpr int kDraws = 120000;
  std::vector<int> counts(kBins, 0);
  for (int i = 0; i < kDraws; ++i) {
    const auto v = s.uniform_int(0, kBins - 1);
    REQUIRE(v >= 0);
    REQUIRE(v < kBins);
    ++counts[static_cast<std::size_t>(v)];
  }
  const double expected = static_cast<double>(kDraws) / kBins;
  double stat = 0.0;
  for (int c : counts) stat += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(kBins - 1);
  CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.01);
}

TEST_CASE("normal draws have unit moments") {
  SeededStream s(11);
  constexpr int kDraws = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / kDraws;
  const double var = sq / kDraws - mean * mean;
  // 5 standard errors
  CHECK(std::abs(mean) < 5.0 / std::sqrt(kDraws));
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / kDraws));
}

TEST_CASE("uniform stays in its half-open range") {
  SeededStream s(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = s.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }
}
