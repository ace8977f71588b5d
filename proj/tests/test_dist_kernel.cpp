#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "modelmix/dist_kernel.hpp"
#include "modelmix/errors.hpp"
#include "modelmix/quadrature.hpp"
#include "modelmix/rng.hpp"

using namespace modelmix;

namespace {

const std::vector<MixtureKernel> kProbeKernels = {
    {NoiseFamily::gaussian, 1.0, 0.0, 0.0},
    {NoiseFamily::gaussian, 2.0, 1.0, 3.0},
    {NoiseFamily::gaussian, 0.01, 0.02, 0.15},
    {NoiseFamily::laplace, 1.0, 0.0, 0.0},
    {NoiseFamily::laplace, 0.5, 1.0, 2.0},
    {NoiseFamily::laplace, 0.01, -0.5, 0.075},
};

}  // namespace

TEST_CASE("pure standard normal density at zero") {
  const MixtureKernel k{NoiseFamily::gaussian, 1.0, 0.0, 0.0};
  CHECK(pdf(k, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("gaussian mixture matches brute-force convolution") {
  // scale=2, shift=1, halfwidth=3 at o=0.5; oracle from 50-digit quadrature
  // of the N(1,2) x U[-3,3] convolution integral.
  const MixtureKernel k{NoiseFamily::gaussian, 2.0, 1.0, 3.0};
  CHECK(std::fabs(pdf(k, 0.5) - 0.14238184491155460865) < 1e-10);
}

TEST_CASE("laplace mixture matches brute-force convolution") {
  const MixtureKernel k{NoiseFamily::laplace, 0.5, 1.0, 2.0};
  const struct {
    double o, value;
  } cases[] = {{1.0, 0.24542109027781645493},
               {2.5, 0.20390108460787539527},
               {3.0, 0.12495806717151218602},
               {4.2, 0.011335940100800512467},
               {-3.5, 0.00084196083370981075529}};
  for (const auto& c : cases) {
    CHECK(pdf(k, c.o) == doctest::Approx(c.value).epsilon(1e-12));
  }
}

TEST_CASE("laplace density continuous at the branch seams") {
  const MixtureKernel k{NoiseFamily::laplace, 0.5, 1.0, 2.0};
  for (double seam : {k.shift - k.halfwidth, k.shift + k.halfwidth}) {
    const double inner = pdf(k, std::nextafter(seam, k.shift));
    const double outer = pdf(k, std::nextafter(seam, 2.0 * seam - k.shift));
    CHECK(std::fabs(inner - outer) <= 1e-12);
    // Both sides equal (1 - e^{-lambda tau_bar}) / (2 tau_bar).
    const double span = 2.0 * k.halfwidth;
    const double seam_value =
        (1.0 - std::exp(-span / k.scale)) / (2.0 * span);
    CHECK(pdf(k, seam) == doctest::Approx(seam_value).epsilon(1e-12));
  }
}

TEST_CASE("normalization over the support window") {
  for (const MixtureKernel& k : kProbeKernels) {
    const auto [lo, hi] = support_window(k, 1e-12);
    const QuadResult r = integrate_with_breakpoints(
        [&](double o) { return pdf(k, o); },
        {lo, k.shift - k.halfwidth, k.shift, k.shift + k.halfwidth, hi},
        1e-12, 0.0, 2000);
    CHECK(r.value <= 1.0 + 1e-9);
    CHECK(r.value >= 1.0 - 1e-9);
  }
}

TEST_CASE("symmetry about the shift") {
  Rng rng(2024);
  for (const MixtureKernel& k : kProbeKernels) {
    const double reach = k.halfwidth + 8.0 * k.scale;
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(0.0, reach);
      const double right = pdf(k, k.shift + x);
      const double left = pdf(k, k.shift - x);
      CHECK(std::fabs(right - left) <=
            1e-12 * std::max(1.0, std::max(right, left)));
    }
  }
}

TEST_CASE("monotone tails outside the uniform support") {
  for (const MixtureKernel& k : kProbeKernels) {
    double prev = pdf(k, k.shift + k.halfwidth);
    for (int i = 1; i <= 80; ++i) {
      const double o = k.shift + k.halfwidth + 0.1 * i * k.scale;
      const double value = pdf(k, o);
      CHECK(value <= prev * (1.0 + 1e-12));
      prev = value;
    }
  }
}

TEST_CASE("vanishing halfwidth matches the pure base density") {
  Rng rng(7);
  for (NoiseFamily family : {NoiseFamily::gaussian, NoiseFamily::laplace}) {
    const MixtureKernel base{family, 1.0, 0.5, 0.0};
    const MixtureKernel narrow{family, 1.0, 0.5, 1e-8};
    for (int i = 0; i < 100; ++i) {
      const double o = rng.uniform(-5.0, 6.0);
      CHECK(pdf(narrow, o) == doctest::Approx(pdf(base, o)).epsilon(1e-6));
    }
  }
}

TEST_CASE("log_pdf agrees with log of pdf in the bulk") {
  Rng rng(11);
  for (const MixtureKernel& k : kProbeKernels) {
    const double reach = k.halfwidth + 6.0 * k.scale;
    for (int i = 0; i < 100; ++i) {
      const double o = k.shift + rng.uniform(-reach, reach);
      CHECK(log_pdf(k, o) ==
            doctest::Approx(std::log(pdf(k, o))).epsilon(1e-12));
    }
  }
}

TEST_CASE("pure gaussian log-density differences are quadratic") {
  const MixtureKernel k{NoiseFamily::gaussian, 1.0, 0.0, 0.0};
  for (double o : {0.5, 1.0, 3.0, 8.0, 12.0}) {
    CHECK(log_pdf(k, o) - log_pdf(k, 0.0) ==
          doctest::Approx(-o * o / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("deep-tail log-ratio matches the high-precision oracle") {
  // scale=1, halfwidth=2, shifts 0 vs 1, o = 10 * scale; oracle from
  // 50-digit evaluation of the two convolution integrals.
  const MixtureKernel p0{NoiseFamily::gaussian, 1.0, 0.0, 2.0};
  const MixtureKernel p1{NoiseFamily::gaussian, 1.0, 1.0, 2.0};
  const double lr = log_pdf(p1, 10.0) - log_pdf(p0, 10.0);
  CHECK(std::fabs(lr - 7.6291296611034745064) < 1e-6);
}

TEST_CASE("log-ratios stay finite far into the tails") {
  const MixtureKernel p0{NoiseFamily::gaussian, 0.01, 0.0, 0.15};
  const MixtureKernel p1{NoiseFamily::gaussian, 0.01, 0.004, 0.15};
  for (double mult : {6.0, 12.0, 20.0, 40.0}) {
    const double o = p0.halfwidth + mult * p0.scale;
    const double lr = log_pdf(p1, o) - log_pdf(p0, o);
    CHECK(std::isfinite(lr));
    CHECK(lr > 0.0);  // p1 is shifted toward positive o
  }
}

TEST_CASE("log_norm_sf against frozen high-precision values") {
  CHECK(log_norm_sf(10.0) ==
        doctest::Approx(-53.23128515051247057835).epsilon(1e-13));
  CHECK(log_norm_sf(20.0) ==
        doctest::Approx(-203.9171553710972639368).epsilon(1e-13));
  CHECK(log_norm_sf(35.0) ==
        doctest::Approx(-616.9751012619225134732).epsilon(1e-13));
  CHECK(log_norm_sf(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  // Symmetry identity Q(-x) = 1 - Q(x).
  CHECK(std::exp(log_norm_sf(-1.5)) ==
        doctest::Approx(1.0 - std::exp(log_norm_sf(1.5))).epsilon(1e-13));
}

TEST_CASE("support window properties") {
  // Standard normal, tol 1e-12: window must contain [-7.1, 7.1].
  const MixtureKernel g{NoiseFamily::gaussian, 1.0, 0.0, 0.0};
  const auto [lo, hi] = support_window(g, 1e-12);
  CHECK(lo <= -7.1);
  CHECK(hi >= 7.1);
  CHECK(lo == doctest::Approx(-hi).epsilon(1e-12));  // symmetric about 0
  CHECK(std::exp(log_norm_sf(hi)) <= 0.5e-12);       // tail mass within tol

  // halfwidth = 5 widens each side by exactly 5 at equal tol.
  const MixtureKernel wide{NoiseFamily::gaussian, 1.0, 0.0, 5.0};
  const auto [wlo, whi] = support_window(wide, 1e-12);
  CHECK(whi - hi == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(lo - wlo == doctest::Approx(5.0).epsilon(1e-12));

  // Laplace window comes from the exponential tail bound.
  const MixtureKernel lap{NoiseFamily::laplace, 0.5, 0.0, 0.0};
  const auto [llo, lhi] = support_window(lap, 1e-10);
  CHECK(lhi == doctest::Approx(0.5 * std::log(1e10)).epsilon(1e-12));
  CHECK(llo == doctest::Approx(-lhi).epsilon(1e-12));
}

TEST_CASE("contract violations are rejected") {
  MixtureKernel bad{NoiseFamily::gaussian, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(pdf(bad, 0.0), ContractError);
  bad = {NoiseFamily::gaussian, 1.0, 0.0, -0.1};
  CHECK_THROWS_AS(pdf(bad, 0.0), ContractError);
  const MixtureKernel ok{NoiseFamily::gaussian, 1.0, 0.0, 0.0};
  CHECK_THROWS_AS(pdf(ok, std::nan("")), ContractError);
  CHECK_THROWS_AS(support_window(ok, 0.0), ContractError);
  CHECK_THROWS_AS(support_window(ok, 1.0), ContractError);
  CHECK_THROWS_AS(noise_family_from_string("cauchy"), ContractError);
}
