#include <doctest.h>

#include <cmath>
#include <vector>

#include "cace/errors.hpp"
#include "cace/families.hpp"
#include "cace/rng.hpp"

using namespace cace;

namespace {

OutcomeParams table_params(FamilyId id) {
  OutcomeParams p;
  switch (id) {
    case FamilyId::homo_normal:
      p = {{5.0}, {4.0}, {6.0}, {3.0}, {1.0}};
      break;
    case FamilyId::hetero_normal:
      p = {{5.0, 1.0}, {4.0, 1.0}, {6.0, 1.0}, {3.0, 1.0}, {}};
      break;
    case FamilyId::exponential:
      p = {{1.0 / 5.0}, {1.0 / 4.0}, {1.0 / 6.0}, {1.0 / 3.0}, {}};
      break;
    case FamilyId::gamma:
      p = {{5.0}, {4.0}, {6.0}, {3.0}, {1.0}};
      break;
    case FamilyId::lognormal:
      p = {{0.0}, {-1.0}, {-1.5}, {-0.5}, {1.0}};
      break;
  }
  return p;
}

// Random admissible single-component parameters for property tests.
std::vector<double> random_component(const OutcomeFamily& f, RngStream& rng) {
  const int nb = f.block_size(), ns = f.shared_size();
  std::vector<double> x(static_cast<size_t>(nb + ns));
  for (int j = 0; j < nb + ns; ++j)
    x[static_cast<size_t>(j)] =
        f.positive_param(j) ? std::exp(rng.uniform_range(-1.0, 1.5)) : rng.uniform_range(-3.0, 6.0);
  return x;
}

double random_support_point(const OutcomeFamily& f, RngStream& rng) {
  const Support s = f.support();
  if (std::isinf(s.lo)) return rng.uniform_range(-8.0, 8.0);
  return s.lo + std::exp(rng.uniform_range(-3.0, 2.0));
}

}  // namespace

TEST_CASE("family lookup by name, with aliases") {
  CHECK(get_family("homo_normal").id() == FamilyId::homo_normal);
  CHECK(get_family("homo-normal").id() == FamilyId::homo_normal);
  CHECK(get_family("normal").id() == FamilyId::homo_normal);
  CHECK(get_family("hetero_normal").id() == FamilyId::hetero_normal);
  CHECK(get_family("exponential").id() == FamilyId::exponential);
  CHECK(get_family("gamma").id() == FamilyId::gamma);
  CHECK(get_family("lognormal").id() == FamilyId::lognormal);
  CHECK_THROWS_AS(get_family("weibull"), config_error);
}

TEST_CASE("dimensions and supports") {
  const auto& homo = get_family(FamilyId::homo_normal);
  CHECK(homo.dim() == 2);
  CHECK(homo.block_size() == 1);
  CHECK(homo.shared_size() == 1);
  CHECK(param_count(homo) == 5);
  CHECK(homo.support().contains(-100.0));

  const auto& het = get_family(FamilyId::hetero_normal);
  CHECK(het.block_size() == 2);
  CHECK(het.shared_size() == 0);
  CHECK(param_count(het) == 8);

  const auto& ex = get_family(FamilyId::exponential);
  CHECK(ex.dim() == 1);
  CHECK(param_count(ex) == 4);
  CHECK_FALSE(ex.support().contains(-0.1));
  CHECK(ex.support().contains(0.1));

  const auto& ga = get_family(FamilyId::gamma);
  CHECK(ga.dim() == 2);
  CHECK(param_count(ga) == 5);
  CHECK_FALSE(ga.support().contains(0.0));

  const auto& ln = get_family(FamilyId::lognormal);
  CHECK(ln.dim() == 2);
  CHECK_FALSE(ln.support().contains(0.0));
  CHECK(ln.support().contains(1e-6));
}

TEST_CASE("densities match their textbook closed forms") {
  const double inv_sqrt_2pi = 0.3989422804014327;

  const auto& homo = get_family(FamilyId::homo_normal);
  double b[2] = {5.0}, s[1] = {1.0};
  CHECK(density(homo, b, s, 5.0) == doctest::Approx(inv_sqrt_2pi).epsilon(1e-12));
  CHECK(density(homo, b, s, 7.0) ==
        doctest::Approx(inv_sqrt_2pi * std::exp(-2.0)).epsilon(1e-12));

  const auto& het = get_family(FamilyId::hetero_normal);
  double bh[2] = {5.0, 4.0};
  CHECK(density(het, bh, nullptr, 5.0) == doctest::Approx(inv_sqrt_2pi / 2.0).epsilon(1e-12));

  const auto& ex = get_family(FamilyId::exponential);
  double be[1] = {0.2};
  CHECK(density(ex, be, nullptr, 5.0) == doctest::Approx(0.2 * std::exp(-1.0)).epsilon(1e-12));

  const auto& ga = get_family(FamilyId::gamma);
  double bg[1] = {5.0};
  double sg[1] = {1.0};
  // shape 5, rate 1 at y = 4: 4^4 e^-4 / 4!
  CHECK(density(ga, bg, sg, 4.0) == doctest::Approx(256.0 * std::exp(-4.0) / 24.0).epsilon(1e-12));

  const auto& ln = get_family(FamilyId::lognormal);
  double bl[1] = {0.0};
  double sl[1] = {1.0};
  CHECK(density(ln, bl, sl, 1.0) == doctest::Approx(inv_sqrt_2pi).epsilon(1e-12));
  const double y = 2.0;
  CHECK(density(ln, bl, sl, y) ==
        doctest::Approx(inv_sqrt_2pi / y * std::exp(-0.5 * std::log(y) * std::log(y)))
            .epsilon(1e-12));
}

TEST_CASE("component means") {
  const double mu[] = {4.5}, s2[] = {2.0};
  CHECK(get_family(FamilyId::homo_normal).mean(mu, s2) == 4.5);
  const double mu_s2[] = {4.5, 2.0};
  CHECK(get_family(FamilyId::hetero_normal).mean(mu_s2, nullptr) == 4.5);
  const double rate[] = {0.25};
  CHECK(get_family(FamilyId::exponential).mean(rate, nullptr) == doctest::Approx(4.0));
  const double shape[] = {6.0}, grate[] = {2.0};
  CHECK(get_family(FamilyId::gamma).mean(shape, grate) == doctest::Approx(3.0));
  const double lmu[] = {0.0}, ls2[] = {1.0};
  CHECK(get_family(FamilyId::lognormal).mean(lmu, ls2) == doctest::Approx(std::exp(0.5)));
}

TEST_CASE("design-point CACE values") {
  CHECK(cace::cace(get_family(FamilyId::homo_normal), table_params(FamilyId::homo_normal)) ==
        doctest::Approx(1.0));
  CHECK(cace::cace(get_family(FamilyId::hetero_normal), table_params(FamilyId::hetero_normal)) ==
        doctest::Approx(1.0));
  CHECK(cace::cace(get_family(FamilyId::exponential), table_params(FamilyId::exponential)) ==
        doctest::Approx(1.0));
  CHECK(cace::cace(get_family(FamilyId::gamma), table_params(FamilyId::gamma)) ==
        doctest::Approx(1.0));
  CHECK(cace::cace(get_family(FamilyId::lognormal), table_params(FamilyId::lognormal)) ==
        doctest::Approx(std::exp(0.5) - std::exp(-0.5)));
}

TEST_CASE("stratum means pick the right component") {
  const auto& f = get_family(FamilyId::homo_normal);
  const OutcomeParams p = table_params(FamilyId::homo_normal);
  CHECK(stratum_mean(f, p, Stratum::complier, 1) == doctest::Approx(5.0));
  CHECK(stratum_mean(f, p, Stratum::complier, 0) == doctest::Approx(4.0));
  CHECK(stratum_mean(f, p, Stratum::always_taker, 0) == doctest::Approx(6.0));
  CHECK(stratum_mean(f, p, Stratum::always_taker, 1) == doctest::Approx(6.0));
  CHECK(stratum_mean(f, p, Stratum::never_taker, 1) == doctest::Approx(3.0));
}

TEST_CASE("validation rejects inadmissible parameters") {
  const auto& homo = get_family(FamilyId::homo_normal);
  OutcomeParams bad = table_params(FamilyId::homo_normal);
  bad.shared[0] = -1.0;
  CHECK_THROWS_AS(validate_params(homo, bad), parameter_error);

  const auto& ex = get_family(FamilyId::exponential);
  OutcomeParams bad2 = table_params(FamilyId::exponential);
  bad2.block_a[0] = 0.0;
  CHECK_THROWS_AS(validate_params(ex, bad2), parameter_error);

  const auto& ga = get_family(FamilyId::gamma);
  OutcomeParams bad3 = table_params(FamilyId::gamma);
  bad3.block_n[0] = -2.0;
  CHECK_THROWS_AS(validate_params(ga, bad3), parameter_error);

  OutcomeParams wrong_shape = table_params(FamilyId::homo_normal);
  wrong_shape.block_1c.push_back(1.0);
  CHECK_THROWS_AS(validate_params(homo, wrong_shape), parameter_error);
}

TEST_CASE("flatten and unflatten round-trip") {
  for (FamilyId id : {FamilyId::homo_normal, FamilyId::hetero_normal, FamilyId::exponential,
                      FamilyId::gamma, FamilyId::lognormal}) {
    const auto& f = get_family(id);
    const OutcomeParams p = table_params(id);
    const std::vector<double> flat = flatten_params(f, p);
    CHECK(static_cast<int>(flat.size()) == param_count(f));
    const OutcomeParams back = unflatten_params(f, flat.data());
    CHECK(back.block_1c == p.block_1c);
    CHECK(back.block_0c == p.block_0c);
    CHECK(back.block_a == p.block_a);
    CHECK(back.block_n == p.block_n);
    CHECK(back.shared == p.shared);
  }
}

TEST_CASE("log_density decomposes as normalizer + base + natural inner product") {
  RngStream rng(2024);
  for (FamilyId id : {FamilyId::homo_normal, FamilyId::hetero_normal, FamilyId::exponential,
                      FamilyId::gamma, FamilyId::lognormal}) {
    const auto& f = get_family(id);
    for (int rep = 0; rep < 50; ++rep) {
      const auto x = random_component(f, rng);
      const double* b = x.data();
      const double* s = x.data() + f.block_size();
      const double y = random_support_point(f, rng);
      const auto v = f.natural_view(b, s);
      double t[2];
      f.suff_stats(y, t);
      double expect = v.log_c + f.log_base(y);
      for (int k = 0; k < v.K; ++k) expect += v.p[static_cast<size_t>(k)] * t[k];
      CHECK(log_density(f, b, s, y) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("natural-view derivatives match finite differences") {
  RngStream rng(77);
  for (FamilyId id : {FamilyId::homo_normal, FamilyId::hetero_normal, FamilyId::exponential,
                      FamilyId::gamma, FamilyId::lognormal}) {
    const auto& f = get_family(id);
    const int np = f.block_size() + f.shared_size();
    for (int rep = 0; rep < 40; ++rep) {
      auto x = random_component(f, rng);
      const auto v = f.natural_view(x.data(), x.data() + f.block_size());
      for (int j = 0; j < np; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[static_cast<size_t>(j)]));
        auto xp = x, xm = x;
        xp[static_cast<size_t>(j)] += h;
        xm[static_cast<size_t>(j)] -= h;
        const auto vp = f.natural_view(xp.data(), xp.data() + f.block_size());
        const auto vm = f.natural_view(xm.data(), xm.data() + f.block_size());
        for (int k = 0; k < v.K; ++k) {
          const double fd = (vp.p[static_cast<size_t>(k)] - vm.p[static_cast<size_t>(k)]) / (2 * h);
          CHECK(v.dp[static_cast<size_t>(k)][static_cast<size_t>(j)] ==
                doctest::Approx(fd).epsilon(1e-5));
        }
        const double fdc = (vp.log_c - vm.log_c) / (2 * h);
        CHECK(v.dlog_c[static_cast<size_t>(j)] == doctest::Approx(fdc).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("log_density_grad matches finite differences") {
  RngStream rng(78);
  for (FamilyId id : {FamilyId::homo_normal, FamilyId::hetero_normal, FamilyId::exponential,
                      FamilyId::gamma, FamilyId::lognormal}) {
    const auto& f = get_family(id);
    const int np = f.block_size() + f.shared_size();
    for (int rep = 0; rep < 40; ++rep) {
      auto x = random_component(f, rng);
      const double y = random_support_point(f, rng);
      std::vector<double> grad(static_cast<size_t>(np));
      log_density_grad(f, x.data(), x.data() + f.block_size(), y, grad.data());
      for (int j = 0; j < np; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[static_cast<size_t>(j)]));
        auto xp = x, xm = x;
        xp[static_cast<size_t>(j)] += h;
        xm[static_cast<size_t>(j)] -= h;
        const double fd = (log_density(f, xp.data(), xp.data() + f.block_size(), y) -
                           log_density(f, xm.data(), xm.data() + f.block_size(), y)) /
                          (2 * h);
        CHECK(grad[static_cast<size_t>(j)] == doctest::Approx(fd).epsilon(2e-5));
      }
    }
  }
}

TEST_CASE("densities integrate to one") {
  // Riemann sums on wide grids; loose tolerance, this is a smoke check on the
  // normalizer, not a quadrature exercise.
  for (FamilyId id : {FamilyId::homo_normal, FamilyId::exponential, FamilyId::gamma,
                      FamilyId::lognormal}) {
    const auto& f = get_family(id);
    const OutcomeParams p = table_params(id);
    const double lo = std::isinf(f.support().lo) ? -30.0 : 1e-9;
    const double hi = 60.0;
    const int steps = 600000;
    const double dx = (hi - lo) / steps;
    double mass = 0;
    for (int i = 0; i < steps; ++i) {
      const double y = lo + (i + 0.5) * dx;
      mass += density(f, p.block_1c.data(), p.shared.empty() ? nullptr : p.shared.data(), y) * dx;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }
}
