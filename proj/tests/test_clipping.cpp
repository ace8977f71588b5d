#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "modelmix/clipping.hpp"
#include "modelmix/errors.hpp"
#include "modelmix/rng.hpp"

using namespace modelmix;

namespace {

std::vector<double> random_vector(Rng& rng, int d, double spread) {
  std::vector<double> g(d);
  for (double& x : g) x = rng.uniform(-spread, spread);
  return g;
}

}  // namespace

TEST_CASE("worked examples") {
  // Norm 5 under threshold 10: untouched, bit for bit.
  const std::vector<double> small = {3.0, 4.0};
  CHECK(clip_l2(small, 10.0) == small);

  // Norm 5 over threshold 1: exact rescale to (0.6, 0.8).
  const std::vector<double> unit = clip_l2(small, 1.0);
  CHECK(unit[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(unit[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(l2_norm(unit) == doctest::Approx(1.0).epsilon(1e-15));

  // The zero gradient stays zero.
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  CHECK(clip_l2(zero, 1.0) == zero);
  CHECK(clip_l2_linf(zero, {1.0, 4}) == zero);

  // c = 5, p = 4: coordinate cap 2.5 bites after the (no-op) l2 step.
  const std::vector<double> capped = clip_l2_linf({3.0, 4.0}, {5.0, 4});
  CHECK(capped[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(capped[1] == doctest::Approx(2.5).epsilon(1e-15));

  // c = 5, p = 1: plain l2 clip, (0, 7) -> (0, 5).
  const std::vector<double> tall = clip_l2_linf({0.0, 7.0}, {5.0, 1});
  CHECK(tall[0] == 0.0);
  CHECK(tall[1] == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("norm contracts on 1000 random vectors") {
  Rng rng(314159);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + int(rng.uniform(0.0, 30.0));
    const double spread = std::exp(rng.uniform(-3.0, 3.0));
    const std::vector<double> g = random_vector(rng, d, spread);
    const double c = std::exp(rng.uniform(-2.0, 2.0));
    const int p = 1 + int(rng.uniform(0.0, 16.0));
    const ClipConfig cfg{c, p};

    const std::vector<double> l2 = clip_l2(g, c);
    CHECK(l2_norm(l2) <= c * (1.0 + 1e-12));
    const std::vector<double> both = clip_l2_linf(g, cfg);
    CHECK(l2_norm(both) <= c * (1.0 + 1e-12));
    CHECK(linf_norm(both) <= cfg.coord_cap() * (1.0 + 1e-12));

    // Signs survive and magnitudes never grow, coordinate by coordinate.
    REQUIRE(both.size() == g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::fabs(both[i]) <= std::fabs(g[i]) * (1.0 + 1e-12));
      if (g[i] != 0.0) CHECK(both[i] * g[i] >= 0.0);
    }

    // Vectors already inside the constraint set are exact fixed points.
    CHECK(clip_l2(l2 /* norm <= c */, c * (1.0 + 1e-9)) == l2);
    CHECK(clip_l2_linf(both, cfg) == both);
  }
}

TEST_CASE("idempotence is exact, not approximate") {
  Rng rng(99);
  const ClipConfig cfg{1.3, 9};
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> g = random_vector(rng, 12, 10.0);
    const std::vector<double> once = clip_l2_linf(g, cfg);
    CHECK(clip_l2_linf(once, cfg) == once);  // bit-identical
    const std::vector<double> l2_once = clip_l2(g, cfg.c);
    CHECK(clip_l2(l2_once, cfg.c) == l2_once);
  }
}

TEST_CASE("clipped norm is monotone in the threshold") {
  Rng rng(5);
  const std::vector<double> g = random_vector(rng, 20, 4.0);
  double prev = 0.0;
  for (double c = 0.1; c <= 12.0; c += 0.1) {
    const double norm = l2_norm(clip_l2(g, c));
    CHECK(norm >= prev - 1e-12);
    CHECK(norm <= std::min(c, l2_norm(g)) * (1.0 + 1e-12));
    prev = norm;
  }
}

TEST_CASE("contract violations") {
  CHECK_THROWS_AS(clip_l2({1.0}, 0.0), ContractError);
  CHECK_THROWS_AS(clip_l2({1.0}, -2.0), ContractError);
  CHECK_THROWS_AS(clip_l2_linf({1.0}, {1.0, 0}), ContractError);
  ClipConfig bad{-1.0, 2};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}
