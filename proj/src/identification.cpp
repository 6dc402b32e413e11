#include "cace/identification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace cace {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct ComponentLogDensities {
  double f1c, f0c, fa, fn;
};

ComponentLogDensities component_log_densities(const OutcomeFamily& f, const OutcomeParams& p,
                                              double y) {
  const double* shared = p.shared.empty() ? nullptr : p.shared.data();
  return {log_density(f, p.block_1c.data(), shared, y),
          log_density(f, p.block_0c.data(), shared, y),
          log_density(f, p.block_a.data(), shared, y),
          log_density(f, p.block_n.data(), shared, y)};
}

}  // namespace

LogCellMasses log_cell_masses(const OutcomeFamily& f, const OutcomeParams& params,
                              const FirstStageParams& alpha, double y) {
  alpha.validate();
  const auto lf = component_log_densities(f, params, y);
  const double lxi = std::log(alpha.xi);
  const double lxi0 = std::log(1.0 - alpha.xi);
  const double lwc = log_or_neg_inf(alpha.omega_c());
  const double lwa = log_or_neg_inf(alpha.omega_a);
  const double lwn = log_or_neg_inf(alpha.omega_n);

  LogCellMasses m{};
  m.lm11 = lxi + logsumexp2(lwc + lf.f1c, lwa + lf.fa);
  m.lm10 = lxi + lwn + lf.fn;
  m.lm01 = lxi0 + lwa + lf.fa;
  m.lm00 = lxi0 + logsumexp2(lwc + lf.f0c, lwn + lf.fn);

  const double top = std::max(std::max(m.lm11, m.lm10), std::max(m.lm01, m.lm00));
  if (top == kNegInf)
    throw degenerate_point_error("all four cell masses vanished at y = " + std::to_string(y));
  m.log_norm = top + std::log(std::exp(m.lm11 - top) + std::exp(m.lm10 - top) +
                              std::exp(m.lm01 - top) + std::exp(m.lm00 - top));
  return m;
}

CellProbabilities cell_probabilities(const OutcomeFamily& f, const OutcomeParams& params,
                                     const FirstStageParams& alpha, double y) {
  const auto m = log_cell_masses(f, params, alpha, y);
  return {std::exp(m.lm11 - m.log_norm), std::exp(m.lm10 - m.log_norm),
          std::exp(m.lm01 - m.log_norm), std::exp(m.lm00 - m.log_norm)};
}

std::array<double, 3> log_odds_contrasts(const OutcomeFamily& f, const OutcomeParams& params,
                                         const FirstStageParams& alpha, double y) {
  const auto c = cell_probabilities(f, params, alpha, y);
  const double xi = alpha.xi;
  if (!(c.p10 > 0.0) || !(c.p01 > 0.0))
    throw domain_error("log-odds need strictly positive p10 and p01 at y");
  const double r1 = c.p10 * (1.0 - xi) / (c.p01 * xi);
  const double r2 = c.p00 * xi / (c.p10 * (1.0 - xi)) - 1.0;
  const double r3 = c.p11 * (1.0 - xi) / (c.p01 * xi) - 1.0;
  if (!(r1 > 0.0) || !(r2 > 0.0) || !(r3 > 0.0))
    throw domain_error("log-odds argument became nonpositive at y");
  return {std::log(r1), std::log(r2), std::log(r3)};
}

IdentifiedVector identified_vector(const OutcomeFamily& f, const OutcomeParams& params) {
  validate_params(f, params);
  const double* shared = params.shared.empty() ? nullptr : params.shared.data();
  const auto v1c = f.natural_view(params.block_1c.data(), shared);
  const auto v0c = f.natural_view(params.block_0c.data(), shared);
  const auto va = f.natural_view(params.block_a.data(), shared);
  const auto vn = f.natural_view(params.block_n.data(), shared);

  const int K = f.dim();
  IdentifiedVector eta;
  eta.K = K;
  eta.values.reserve(static_cast<size_t>(3 * (K + 1)));
  for (int k = 0; k < K; ++k) {
    eta.values.push_back(vn.p[k] - va.p[k]);
    eta.values.push_back(v1c.p[k] - va.p[k]);
    eta.values.push_back(v0c.p[k] - vn.p[k]);
  }
  eta.values.push_back(vn.log_c - va.log_c);
  eta.values.push_back(v1c.log_c - va.log_c);
  eta.values.push_back(v0c.log_c - vn.log_c);
  return eta;
}

std::array<double, 3> log_odds_from_eta(const OutcomeFamily& f, const IdentifiedVector& eta,
                                        const FirstStageParams& alpha, double y) {
  const int K = eta.K;
  double t[2];
  f.suff_stats(y, t);
  double s1 = 0, s2 = 0, s3 = 0;
  for (int k = 0; k < K; ++k) {
    s1 += eta.values[static_cast<size_t>(3 * k)] * t[k];
    s3 += eta.values[static_cast<size_t>(3 * k + 1)] * t[k];
    s2 += eta.values[static_cast<size_t>(3 * k + 2)] * t[k];
  }
  const double wc = alpha.omega_c(), wa = alpha.omega_a, wn = alpha.omega_n;
  s1 += eta.values[static_cast<size_t>(3 * K)] + std::log(wn / wa);
  s3 += eta.values[static_cast<size_t>(3 * K + 1)] + std::log(wc / wa);
  s2 += eta.values[static_cast<size_t>(3 * K + 2)] + std::log(wc / wn);
  return {s1, s2, s3};
}

GlmCoefficients glm_forward(const OutcomeFamily& f, const OutcomeParams& params,
                            const FirstStageParams& alpha) {
  if (f.id() != FamilyId::homo_normal && f.id() != FamilyId::exponential)
    throw unsupported_family_error(
        std::string("log-odds coefficients are linear in y only for the homo-normal and "
                    "exponential families, not ") +
        f.name());
  alpha.validate();
  const auto eta = identified_vector(f, params);
  const int K = eta.K;
  // with a shared variance the y^2 contrasts cancel exactly
  for (int k = 1; k < K; ++k)
    for (int j = 0; j < 3; ++j)
      if (std::abs(eta.values[static_cast<size_t>(3 * k + j)]) > 1e-9)
        throw inconsistent_coefficients_error("higher-order sufficient statistic did not cancel");
  const double wc = alpha.omega_c(), wa = alpha.omega_a, wn = alpha.omega_n;
  GlmCoefficients g;
  g.a1 = eta.values[0];
  g.a3 = eta.values[1];
  g.a2 = eta.values[2];
  g.b1 = eta.values[static_cast<size_t>(3 * K)] + std::log(wn / wa);
  g.b3 = eta.values[static_cast<size_t>(3 * K + 1)] + std::log(wc / wa);
  g.b2 = eta.values[static_cast<size_t>(3 * K + 2)] + std::log(wc / wn);
  return g;
}

OutcomeParams recover_normal(const GlmCoefficients& g, const FirstStageParams& alpha) {
  alpha.validate();
  const double wc = alpha.omega_c(), wa = alpha.omega_a, wn = alpha.omega_n;
  if (!(wa > 0.0) || !(wn > 0.0))
    throw singularity_error("recovery needs positive always- and never-taker proportions");
  constexpr double kTiny = 1e-10;
  if (std::abs(g.a1) < kTiny || std::abs(g.a2) < kTiny || std::abs(g.a3) < kTiny ||
      std::abs(g.a1 + g.a2) < kTiny || std::abs(g.a3 - g.a1) < kTiny)
    throw singularity_error("vanishing slope denominator in the normal recovery");

  const double c1 = (g.b1 - std::log(wn / wa)) / g.a1;
  const double c2 = (g.b2 - std::log(wc / wn)) / g.a2;
  const double c3 = (g.b3 - std::log(wc / wa)) / g.a3;
  const double sigma2 = 2.0 * (c1 - c2) / (g.a1 + g.a2);
  const double sigma2_alt = 2.0 * (c1 - c3) / (g.a3 - g.a1);
  if (!(sigma2 > 0.0))
    throw inconsistent_coefficients_error("recovered sigma2 is not positive");
  if (std::abs(sigma2 - sigma2_alt) > 1e-6 * std::max(1.0, std::abs(sigma2)))
    throw inconsistent_coefficients_error(
        "the two sigma2 expressions disagree: " + std::to_string(sigma2) + " vs " +
        std::to_string(sigma2_alt));

  const double mu_1c = 0.5 * g.a3 * sigma2 - c3;
  const double mu_0c = 0.5 * g.a2 * sigma2 - c2;
  const double mu_n = mu_0c - g.a2 * sigma2;
  const double mu_a = mu_n - g.a1 * sigma2;

  OutcomeParams p;
  p.block_1c = {mu_1c};
  p.block_0c = {mu_0c};
  p.block_a = {mu_a};
  p.block_n = {mu_n};
  p.shared = {sigma2};
  return p;
}

OutcomeParams recover_exponential(const GlmCoefficients& g, const FirstStageParams& alpha) {
  alpha.validate();
  const double wa = alpha.omega_a, wn = alpha.omega_n;
  if (!(wa > 0.0) || !(wn > 0.0))
    throw singularity_error("recovery needs positive always- and never-taker proportions");
  const double ratio = std::exp(g.b1 - std::log(wn / wa));  // lambda_n / lambda_a
  if (std::abs(1.0 - ratio) < 1e-10)
    throw singularity_error("b1 places lambda_n equal to lambda_a; rates are indeterminate");

  const double lambda_a = g.a1 / (1.0 - ratio);
  const double lambda_n = g.a1 * ratio / (1.0 - ratio);
  const double lambda_0c = lambda_n - g.a2;
  const double lambda_1c = lambda_a - g.a3;
  for (double lam : {lambda_1c, lambda_0c, lambda_a, lambda_n})
    if (!(lam > 0.0))
      throw inconsistent_coefficients_error("recovered a nonpositive exponential rate");

  OutcomeParams p;
  p.block_1c = {lambda_1c};
  p.block_0c = {lambda_0c};
  p.block_a = {lambda_a};
  p.block_n = {lambda_n};
  return p;
}

DimensionCheck mapping_dimension_check(int K) {
  if (K < 1) throw domain_error("K must be at least 1");
  DimensionCheck c;
  c.K = K;
  c.unknowns = 4L * K;
  c.identified = 3L * (K + 1);
  c.pass = c.unknowns <= c.identified;
  return c;
}

// ---- Appendix-style full likelihood (test oracle) ----

namespace {

double integrate_one_minus_rho(const OutcomeFamily& f, const double* block, const double* shared,
                               const std::function<double(double)>& rho) {
  const Support sup = f.support();
  using quad = boost::math::quadrature::gauss_kronrod<double, 15>;
  const auto integrand = [&](double y) {
    const double r = rho(y);
    return (1.0 - r) * density(f, block, shared, y);
  };
  // Split at the common step-mechanism knots; harmless for smooth rho.
  std::vector<double> knots = {2.0, 7.0};
  std::vector<double> cuts;
  cuts.push_back(sup.lo);
  for (double k : knots)
    if (k > sup.lo && k < sup.hi) cuts.push_back(k);
  cuts.push_back(sup.hi);

  double total = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    double err = 0.0;
    total += quad::integrate(integrand, cuts[i], cuts[i + 1], 15, 1e-10, &err);
    if (!(err < 1e-6))
      throw numerical_error("quadrature failed to converge for a missing-cell integral");
  }
  return total;
}

}  // namespace

double full_log_likelihood(std::span<const ObservedRecord> records, const OutcomeFamily& f,
                           const OutcomeParams& params, const FirstStageParams& alpha,
                           const std::function<double(double)>& rho) {
  alpha.validate();
  validate_params(f, params);
  const auto counts = CountSummary::from_records(records);
  const double xi = alpha.xi, wc = alpha.omega_c(), wa = alpha.omega_a, wn = alpha.omega_n;
  const double* shared = params.shared.empty() ? nullptr : params.shared.data();

  auto count_log = [](long n, double x) {
    return n > 0 ? static_cast<double>(n) * std::log(x) : 0.0;
  };

  double ll = count_log(counts.n1, xi) + count_log(counts.n0, 1.0 - xi) +
              count_log(counts.n[1][1], 1.0 - wn) + count_log(counts.n[1][0], wn) +
              count_log(counts.n[0][1], wa) + count_log(counts.n[0][0], 1.0 - wa);

  // Missing-cell factors: outcome integrated against (1 - rho).
  if (counts.m[1][1] > 0) {
    const double i1c = integrate_one_minus_rho(f, params.block_1c.data(), shared, rho);
    const double ia = integrate_one_minus_rho(f, params.block_a.data(), shared, rho);
    ll += count_log(counts.m[1][1], (wc * i1c + wa * ia) / (wc + wa));
  }
  if (counts.m[1][0] > 0)
    ll += count_log(counts.m[1][0],
                    integrate_one_minus_rho(f, params.block_n.data(), shared, rho));
  if (counts.m[0][1] > 0)
    ll += count_log(counts.m[0][1],
                    integrate_one_minus_rho(f, params.block_a.data(), shared, rho));
  if (counts.m[0][0] > 0) {
    const double i0c = integrate_one_minus_rho(f, params.block_0c.data(), shared, rho);
    const double in = integrate_one_minus_rho(f, params.block_n.data(), shared, rho);
    ll += count_log(counts.m[0][0], (wc * i0c + wn * in) / (wc + wn));
  }

  // Observed-record factors.
  for (const auto& rec : records) {
    if (!rec.r) continue;
    const double r = rho(rec.y);
    if (!(r > 0.0)) throw domain_error("rho(y) must be positive at an observed outcome");
    ll += std::log(r);
    if (rec.z == 1 && rec.d == 1) {
      const double f1c = density(f, params.block_1c.data(), shared, rec.y);
      const double fa = density(f, params.block_a.data(), shared, rec.y);
      ll += std::log((wc * f1c + wa * fa) / (wc + wa));
    } else if (rec.z == 1 && rec.d == 0) {
      ll += log_density(f, params.block_n.data(), shared, rec.y);
    } else if (rec.z == 0 && rec.d == 1) {
      ll += log_density(f, params.block_a.data(), shared, rec.y);
    } else {
      const double f0c = density(f, params.block_0c.data(), shared, rec.y);
      const double fn = density(f, params.block_n.data(), shared, rec.y);
      ll += std::log((wc * f0c + wn * fn) / (wc + wn));
    }
  }
  return ll;
}

}  // namespace cace
