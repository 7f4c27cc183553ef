#include "doctest.h"

#include <cmath>
#include <set>

#include "czforge/random.hpp"

using namespace czforge;

TEST_CASE("seed derivation is stable and item-sensitive") {
  static_assert(fnv1a64("") == 0xCBF29CE484222325ULL);
  static_assert(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
  CHECK(derive_seed(1, "scene_000000") == derive_seed(1, "scene_000000"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 8; ++m) {
    for (std::uint64_t i = 0; i < 64; ++i) seen.insert(derive_seed(m, i));
  }
  CHECK(seen.size() == 512);
}

TEST_CASE("uniform and normal moments") {
  Rng rng(2024);
  double sum = 0, sq = 0, nsum = 0, nsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sq += u * u;
    const double z = rng.normal();
    nsum += z;
    nsq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sq / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.02));
  CHECK(std::fabs(nsum / n) < 0.01);
  CHECK(nsq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform_int covers its closed range") {
  Rng rng(7);
  std::set<int> seen;
  for (int i = 0; i < 1000; ++i) {
    const int v = rng.uniform_int(-2, 3);
    CHECK(v >= -2);
    CHECK(v <= 3);
    seen.insert(v);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("same seed, same stream") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}
