#include "cace/li.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cace/rng.hpp"

namespace cace {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double log_normal_density(double y, double mu, double sigma2) {
  const double d = y - mu;
  return -0.5 * (kLog2Pi + std::log(sigma2) + d * d / sigma2);
}

// Latent components in EM order; compliers split by arm because their
// observed-outcome law and response probability differ between arms.
enum : int { c1 = 0, c0 = 1, aa = 2, nn = 3 };

struct ComponentRefs {
  double LiParams::* mu;
  double LiParams::* gamma;
};

constexpr ComponentRefs kComp[4] = {
    {&LiParams::mu_1c, &LiParams::gamma_1c},
    {&LiParams::mu_0c, &LiParams::gamma_0c},
    {&LiParams::mu_a, &LiParams::gamma_1a},
    {&LiParams::mu_n, &LiParams::gamma_0n},
};

// Strata able to produce a record in each (z,d) cell.
struct CellComps {
  int comp[2];
  int n;
};

CellComps cell_comps(int z, int d) {
  if (z == 1 && d == 1) return {{c1, aa}, 2};
  if (z == 1 && d == 0) return {{nn, -1}, 1};
  if (z == 0 && d == 1) return {{aa, -1}, 1};
  return {{c0, nn}, 2};
}

double stratum_weight(const LiParams& p, int comp) {
  switch (comp) {
    case c1:
    case c0: return p.alpha.omega_c();
    case aa: return p.alpha.omega_a;
    default: return p.alpha.omega_n;
  }
}

// Log unnormalized posterior weight of one component for one record.
double component_log_weight(const LiParams& p, int comp, const ObservedRecord& rec) {
  const double lw = log_or_neg_inf(stratum_weight(p, comp));
  if (lw == kNegInf) return kNegInf;
  const double gamma = p.*(kComp[comp].gamma);
  if (rec.r)
    return lw + log_or_neg_inf(gamma) + log_normal_density(rec.y, p.*(kComp[comp].mu), p.sigma2);
  return lw + log_or_neg_inf(1.0 - gamma);
}

double record_log_likelihood(const LiParams& p, const ObservedRecord& rec) {
  const auto cc = cell_comps(rec.z, rec.d);
  if (cc.n == 1) return component_log_weight(p, cc.comp[0], rec);
  const double w0 = component_log_weight(p, cc.comp[0], rec);
  const double w1 = component_log_weight(p, cc.comp[1], rec);
  const double m = std::max(w0, w1);
  if (m == kNegInf) return kNegInf;
  return m + std::log(std::exp(w0 - m) + std::exp(w1 - m));
}

struct EmAccum {
  // Per component: total responsibility, responsibility over observed
  // outcomes, weighted outcome sums, and responsibility over responders.
  double resp_total[4] = {0, 0, 0, 0};
  double resp_obs[4] = {0, 0, 0, 0};
  double sum_y[4] = {0, 0, 0, 0};
  double sum_yy[4] = {0, 0, 0, 0};
};

}  // namespace

void LiParams::validate() const {
  alpha.validate();
  if (!(sigma2 > 0.0)) throw parameter_error("sigma2 must be positive");
  for (double g : {gamma_1c, gamma_0c, gamma_0n, gamma_1a})
    if (!(g >= 0.0 && g <= 1.0))
      throw parameter_error("response probabilities must lie in [0,1]");
  for (double m : {mu_1c, mu_0c, mu_a, mu_n})
    if (!std::isfinite(m)) throw parameter_error("stratum means must be finite");
}

double li_log_likelihood(std::span<const ObservedRecord> records, const LiParams& p) {
  p.validate();
  long double total = 0.0L;
  long n1 = 0, n0 = 0;
  for (const auto& rec : records) {
    validate_record(rec);
    (rec.z ? n1 : n0)++;
    const double ll = record_log_likelihood(p, rec);
    if (ll == kNegInf) return -std::numeric_limits<double>::infinity();
    total += static_cast<long double>(ll);
  }
  if (n1 > 0) total += static_cast<long double>(n1) * std::log(p.alpha.xi);
  if (n0 > 0) total += static_cast<long double>(n0) * std::log(1.0 - p.alpha.xi);
  return static_cast<double>(total);
}

namespace {

struct EmOutcome {
  LiParams params;
  double ll = kNegInf;
  int iterations = 0;
  bool converged = false;
};

EmOutcome run_em(std::span<const ObservedRecord> records, LiParams p, const LiOptions& opts) {
  p.validate();
  double ll_prev = li_log_likelihood(records, p);
  if (!std::isfinite(ll_prev))
    throw numerical_error("LI starting point has zero likelihood");

  EmOutcome out;
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    // E-step.
    EmAccum acc;
    for (const auto& rec : records) {
      const auto cc = cell_comps(rec.z, rec.d);
      double resp[2] = {1.0, 0.0};
      if (cc.n == 2) {
        const double w0 = component_log_weight(p, cc.comp[0], rec);
        const double w1 = component_log_weight(p, cc.comp[1], rec);
        const double m = std::max(w0, w1);
        const double e0 = std::exp(w0 - m), e1 = std::exp(w1 - m);
        resp[0] = e0 / (e0 + e1);
        resp[1] = e1 / (e0 + e1);
      }
      for (int j = 0; j < cc.n; ++j) {
        const int comp = cc.comp[j];
        acc.resp_total[comp] += resp[j];
        if (rec.r) {
          acc.resp_obs[comp] += resp[j];
          acc.sum_y[comp] += resp[j] * rec.y;
          acc.sum_yy[comp] += resp[j] * rec.y * rec.y;
        }
      }
    }

    // M-step.
    LiParams next = p;
    const double n = static_cast<double>(records.size());
    const double w_c = (acc.resp_total[c1] + acc.resp_total[c0]) / n;
    const double w_a = acc.resp_total[aa] / n;
    const double w_n = acc.resp_total[nn] / n;
    // xi stays at its closed-form value; stratum proportions re-normalize.
    const double w_sum = w_c + w_a + w_n;
    next.alpha.omega_a = w_a / w_sum;
    next.alpha.omega_n = w_n / w_sum;

    double ss = 0, ss_n = 0;
    for (int comp = 0; comp < 4; ++comp) {
      if (acc.resp_obs[comp] > 1e-12) {
        const double mu = acc.sum_y[comp] / acc.resp_obs[comp];
        next.*(kComp[comp].mu) = mu;
        ss += acc.sum_yy[comp] - 2.0 * mu * acc.sum_y[comp] + mu * mu * acc.resp_obs[comp];
        ss_n += acc.resp_obs[comp];
      }
      if (!opts.pool_gamma && acc.resp_total[comp] > 1e-12)
        next.*(kComp[comp].gamma) =
            std::clamp(acc.resp_obs[comp] / acc.resp_total[comp], 0.0, 1.0);
    }
    if (ss_n > 0) next.sigma2 = std::max(ss / ss_n, 1e-12);
    if (opts.pool_gamma) {
      long responders = 0;
      for (const auto& rec : records) responders += rec.r;
      const double g = static_cast<double>(responders) / n;
      next.gamma_1c = next.gamma_0c = next.gamma_0n = next.gamma_1a = g;
    }

    const double ll = li_log_likelihood(records, next);
    if (ll < ll_prev - 1e-10)
      throw implementation_fault("EM decreased the observed-data log-likelihood: " +
                                 std::to_string(ll_prev) + " -> " + std::to_string(ll));
    p = next;
    const double gain = ll - ll_prev;
    ll_prev = ll;
    if (gain < opts.tol) {
      out.converged = true;
      ++iter;
      break;
    }
  }

  out.params = p;
  out.ll = ll_prev;
  out.iterations = iter;
  return out;
}

LiParams li_moment_start(std::span<const ObservedRecord> records,
                         const FirstStageParams& alpha) {
  // Complete-case moments with each cell read as its dominant stratum.
  double sum[4] = {0, 0, 0, 0}, sumsq[4] = {0, 0, 0, 0};
  long cnt[4] = {0, 0, 0, 0};
  long obs[2][2] = {{0, 0}, {0, 0}}, tot[2][2] = {{0, 0}, {0, 0}};
  for (const auto& rec : records) {
    ++tot[rec.z][rec.d];
    if (!rec.r) continue;
    ++obs[rec.z][rec.d];
    const int comp = rec.z == 1 ? (rec.d == 1 ? c1 : nn) : (rec.d == 1 ? aa : c0);
    sum[comp] += rec.y;
    sumsq[comp] += rec.y * rec.y;
    ++cnt[comp];
  }

  double grand_sum = 0;
  long grand_cnt = 0;
  for (int cmp = 0; cmp < 4; ++cmp) {
    grand_sum += sum[cmp];
    grand_cnt += cnt[cmp];
  }
  const double grand_mean = grand_cnt > 0 ? grand_sum / static_cast<double>(grand_cnt) : 0.0;

  LiParams p;
  p.alpha = alpha;
  double ss = 0;
  for (int cmp = 0; cmp < 4; ++cmp) {
    const double mu = cnt[cmp] > 0 ? sum[cmp] / static_cast<double>(cnt[cmp]) : grand_mean;
    p.*(kComp[cmp].mu) = mu;
    ss += sumsq[cmp] - 2.0 * mu * sum[cmp] + mu * mu * static_cast<double>(cnt[cmp]);
  }
  p.sigma2 = grand_cnt > 1 ? std::max(ss / static_cast<double>(grand_cnt), 1e-4) : 1.0;

  const auto frac = [&](int z, int d) {
    return tot[z][d] > 0 ? static_cast<double>(obs[z][d]) / static_cast<double>(tot[z][d]) : 1.0;
  };
  p.gamma_1c = std::clamp(frac(1, 1), 0.02, 1.0);
  p.gamma_0c = std::clamp(frac(0, 0), 0.02, 1.0);
  p.gamma_0n = std::clamp(frac(1, 0), 0.02, 1.0);
  p.gamma_1a = std::clamp(frac(0, 1), 0.02, 1.0);
  return p;
}

LiParams jitter_start(const LiParams& base, double scale_y, double jitter, RngStream& rng) {
  LiParams p = base;
  for (auto field : {&LiParams::mu_1c, &LiParams::mu_0c, &LiParams::mu_a, &LiParams::mu_n})
    p.*field += jitter * scale_y * rng.uniform_range(-1.0, 1.0);
  p.sigma2 *= std::exp(jitter * rng.uniform_range(-1.0, 1.0));
  for (auto field :
       {&LiParams::gamma_1c, &LiParams::gamma_0c, &LiParams::gamma_0n, &LiParams::gamma_1a}) {
    const double g = std::clamp(p.*field, 0.02, 0.98);
    const double logit = std::log(g / (1.0 - g)) + jitter * rng.uniform_range(-1.0, 1.0);
    p.*field = 1.0 / (1.0 + std::exp(-logit));
  }
  const double fa = std::exp(jitter * rng.uniform_range(-1.0, 1.0));
  const double fn = std::exp(jitter * rng.uniform_range(-1.0, 1.0));
  double wa = base.alpha.omega_a * fa, wn = base.alpha.omega_n * fn;
  const double cap = 0.98;
  if (wa + wn >= cap) {
    const double shrink = cap / (wa + wn);
    wa *= shrink;
    wn *= shrink;
  }
  p.alpha.omega_a = wa;
  p.alpha.omega_n = wn;
  return p;
}

}  // namespace

LiFit li_em_fit(std::span<const ObservedRecord> records, const LiOptions& opts) {
  const CountSummary counts = CountSummary::from_records(records);
  const FirstStageParams alpha0 = first_stage(counts);
  long observed_in_cell[2][2] = {{0, 0}, {0, 0}};
  for (const auto& rec : records)
    if (rec.r) ++observed_in_cell[rec.z][rec.d];
  long n_observed = 0;
  for (int z = 0; z < 2; ++z)
    for (int d = 0; d < 2; ++d) {
      if (counts.n[z][d] > 0 && observed_in_cell[z][d] == 0)
        throw no_information_error("cell (z=" + std::to_string(z) + ", d=" + std::to_string(d) +
                                   ") has records but no observed outcome");
      n_observed += observed_in_cell[z][d];
    }
  if (n_observed == 0)
    throw no_information_error("no observed outcomes");

  double y_sum = 0, y_sq = 0;
  for (const auto& rec : records)
    if (rec.r) {
      y_sum += rec.y;
      y_sq += rec.y * rec.y;
    }
  const double y_mean = y_sum / static_cast<double>(n_observed);
  const double y_sd =
      std::sqrt(std::max(0.0, y_sq / static_cast<double>(n_observed) - y_mean * y_mean));
  const double scale_y = y_sd > 0 ? y_sd : 1.0;

  const LiParams base = opts.init ? *opts.init : li_moment_start(records, alpha0);

  LiFit best;
  best.log_likelihood = kNegInf;
  bool have = false;
  const int n_starts = 1 + std::max(opts.extra_starts, 0);
  for (int start = 0; start < n_starts; ++start) {
    LiParams p0 = base;
    if (start > 0) {
      RngStream rng = RngStream::keyed(opts.seed, 0x11E5ULL, static_cast<uint64_t>(start));
      p0 = jitter_start(base, scale_y, opts.jitter, rng);
    }
    p0.alpha.xi = alpha0.xi;  // xi is never free
    if (opts.pool_gamma) {
      // EM monotonicity holds only when iterates stay inside the constrained
      // space, so project the start onto it before the first sweep.
      const double g = static_cast<double>(n_observed) / static_cast<double>(records.size());
      p0.gamma_1c = p0.gamma_0c = p0.gamma_0n = p0.gamma_1a = std::clamp(g, 0.02, 1.0);
    }

    EmOutcome r;
    try {
      r = run_em(records, p0, opts);
    } catch (const numerical_error&) {
      continue;
    }
    if (r.converged) ++best.starts_converged;
    const bool better = !have || r.ll > best.log_likelihood + 1e-9 ||
                        (r.ll > best.log_likelihood - 1e-9 && r.converged && !best.converged);
    if (better) {
      best.params = r.params;
      best.log_likelihood = r.ll;
      best.iterations = r.iterations;
      best.converged = r.converged;
      best.best_start = start;
      have = true;
    }
  }
  best.starts_tried = n_starts;
  if (!have)
    throw non_convergence_error("every EM start failed for the latent-ignorable model");
  best.cace = best.params.mu_1c - best.params.mu_0c;
  return best;
}

LiFitResult li_fit_with_bootstrap(std::span<const ObservedRecord> records, const LiOptions& opts,
                                  const BootstrapOptions& boot_opts) {
  LiFitResult out;
  out.fit = li_em_fit(records, opts);

  LiOptions warm = opts;
  warm.init = out.fit.params;
  warm.extra_starts = 0;
  // Resample fits feed order statistics of the CACE, which move on a far
  // coarser scale than the base point estimate; a looser EM stop saves many
  // tail sweeps per replicate without touching the quantiles.
  warm.tol = std::max(opts.tol, 1e-5);
  const auto statistic = [&](std::span<const ObservedRecord> resample) {
    try {
      return li_em_fit(resample, warm).cace;
    } catch (const numerical_error&) {
      return li_em_fit(resample, opts).cace;
    }
  };
  out.bootstrap = bootstrap_statistic(records, statistic, boot_opts);
  return out;
}

}  // namespace cace
