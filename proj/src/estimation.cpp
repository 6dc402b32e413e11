#include "cace/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cace/optimize.hpp"
#include "cace/parallel.hpp"
#include "cace/rng.hpp"

namespace cace {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// Component order used throughout this file: 1c, 0c, a, n.
enum : int { k1c = 0, k0c = 1, ka = 2, kn = 3 };

// Per-cell numerator components: which strata can produce an observation in
// cell (z,d), with their arm-and-stratum weights.
struct CellMixture {
  int comps[2];
  int n_comps;
};

constexpr CellMixture kCellMixtures[4] = {
    {{k0c, kn}, 2},  // (z,d) = (0,0)
    {{ka, -1}, 1},   // (0,1)
    {{kn, -1}, 1},   // (1,0)
    {{k1c, ka}, 2},  // (1,1)
};

struct MixtureWeights {
  double lw_num[4][4];  // [cell_index][component] log numerator weight
  double lw_den[4];     // log denominator weight per component
};

MixtureWeights mixture_weights(const FirstStageParams& alpha) {
  const double lxi = std::log(alpha.xi);
  const double lxi0 = std::log(1.0 - alpha.xi);
  const double lwc = log_or_neg_inf(alpha.omega_c());
  const double lwa = log_or_neg_inf(alpha.omega_a);
  const double lwn = log_or_neg_inf(alpha.omega_n);

  MixtureWeights w;
  for (auto& row : w.lw_num)
    for (auto& v : row) v = kNegInf;
  w.lw_num[PreparedSample::cell_index(1, 1)][k1c] = lxi + lwc;
  w.lw_num[PreparedSample::cell_index(1, 1)][ka] = lxi + lwa;
  w.lw_num[PreparedSample::cell_index(1, 0)][kn] = lxi + lwn;
  w.lw_num[PreparedSample::cell_index(0, 1)][ka] = lxi0 + lwa;
  w.lw_num[PreparedSample::cell_index(0, 0)][k0c] = lxi0 + lwc;
  w.lw_num[PreparedSample::cell_index(0, 0)][kn] = lxi0 + lwn;
  // Total mass over the four cells: the xi factors sum out for a and n.
  w.lw_den[k1c] = lxi + lwc;
  w.lw_den[k0c] = lxi0 + lwc;
  w.lw_den[ka] = lwa;
  w.lw_den[kn] = lwn;
  return w;
}

struct ComponentViews {
  OutcomeFamily::NaturalView v[4];
};

ComponentViews component_views(const OutcomeFamily& f, const OutcomeParams& p) {
  const double* shared = p.shared.empty() ? nullptr : p.shared.data();
  return {{f.natural_view(p.block_1c.data(), shared), f.natural_view(p.block_0c.data(), shared),
           f.natural_view(p.block_a.data(), shared), f.natural_view(p.block_n.data(), shared)}};
}

// Shared core of the value and value+gradient evaluations.
template <bool WithGrad>
CondLik evaluate(const PreparedSample& s, const OutcomeParams& params,
                 const FirstStageParams& alpha, std::span<double> grad) {
  alpha.validate();
  const OutcomeFamily& f = s.family();
  validate_params(f, params);

  const auto views = component_views(f, params);
  const auto w = mixture_weights(alpha);
  const int K = f.dim();

  // Accumulated d l2 / d lf_c decomposed over the sufficient statistics:
  // sum of (responsibility - denominator share), and the same weighted by
  // T_k(y).
  double A[4] = {0, 0, 0, 0};
  double B[4][2] = {{0, 0}, {0, 0}, {0, 0}, {0, 0}};

  long double total = 0.0L;
  for (int z = 0; z < 2; ++z) {
    for (int d = 0; d < 2; ++d) {
      const auto& cell = s.cell(z, d);
      if (cell.count == 0) continue;
      const int ci = PreparedSample::cell_index(z, d);
      const auto& mix = kCellMixtures[ci];

      for (long i = 0; i < cell.count; ++i) {
        const double* t = &cell.t[static_cast<size_t>(i) * static_cast<size_t>(K)];
        const double log_h = cell.log_h[static_cast<size_t>(i)];

        double lf[4];
        for (int c = 0; c < 4; ++c) {
          double acc = views.v[c].log_c + log_h;
          for (int k = 0; k < K; ++k) acc += views.v[c].p[static_cast<size_t>(k)] * t[k];
          lf[c] = acc;
        }

        // log denominator: mass of all four cells at this y.
        double dmax = kNegInf;
        double dterm[4];
        for (int c = 0; c < 4; ++c) {
          dterm[c] = w.lw_den[c] + lf[c];
          dmax = std::max(dmax, dterm[c]);
        }
        double dsum = 0;
        for (int c = 0; c < 4; ++c) dsum += std::exp(dterm[c] - dmax);
        const double log_den = dmax + std::log(dsum);

        // log numerator: mass of the record's own cell.
        double log_num;
        double nterm[2];
        if (mix.n_comps == 1) {
          log_num = w.lw_num[ci][mix.comps[0]] + lf[mix.comps[0]];
          nterm[0] = log_num;
        } else {
          nterm[0] = w.lw_num[ci][mix.comps[0]] + lf[mix.comps[0]];
          nterm[1] = w.lw_num[ci][mix.comps[1]] + lf[mix.comps[1]];
          const double nmax = std::max(nterm[0], nterm[1]);
          log_num = nmax + std::log(std::exp(nterm[0] - nmax) + std::exp(nterm[1] - nmax));
        }
        total += static_cast<long double>(log_num - log_den);

        if constexpr (WithGrad) {
          for (int j = 0; j < mix.n_comps; ++j) {
            const int c = mix.comps[j];
            const double resp = std::exp(nterm[j] - log_num);
            A[c] += resp;
            for (int k = 0; k < K; ++k) B[c][k] += resp * t[k];
          }
          for (int c = 0; c < 4; ++c) {
            const double share = std::exp(dterm[c] - log_den);
            A[c] -= share;
            for (int k = 0; k < K; ++k) B[c][k] -= share * t[k];
          }
        }
      }
    }
  }

  if constexpr (WithGrad) {
    const int bs = f.block_size();
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int c = 0; c < 4; ++c) {
      const auto& v = views.v[c];
      for (int j = 0; j < v.nparam; ++j) {
        const size_t g = j < bs ? static_cast<size_t>(c * bs + j)
                                : static_cast<size_t>(4 * bs + (j - bs));
        double acc = v.dlog_c[static_cast<size_t>(j)] * A[c];
        for (int k = 0; k < K; ++k)
          acc += v.dp[static_cast<size_t>(k)][static_cast<size_t>(j)] * B[c][k];
        grad[g] += acc;
      }
    }
  }

  return {static_cast<double>(total), s.n_dropped()};
}

}  // namespace

// ---- first stage ----

FirstStageParams first_stage(const CountSummary& counts) {
  if (counts.n1 == 0 || counts.n0 == 0)
    throw insufficient_data_error("both randomization arms must be non-empty");
  FirstStageParams a;
  a.xi = static_cast<double>(counts.n1) / static_cast<double>(counts.n_total);
  a.omega_n = static_cast<double>(counts.n[1][0]) / static_cast<double>(counts.n1);
  a.omega_a = static_cast<double>(counts.n[0][1]) / static_cast<double>(counts.n0);
  if (!(a.omega_c() > 0.0))
    throw weak_instrument_error(
        "estimated complier proportion is not positive (omega_a-hat + omega_n-hat >= 1)");
  a.validate();
  return a;
}

FirstStageParams first_stage(std::span<const ObservedRecord> records) {
  return first_stage(CountSummary::from_records(records));
}

double first_stage_log_likelihood(const CountSummary& counts, const FirstStageParams& alpha) {
  alpha.validate();
  const auto term = [](long count, double p) {
    return count > 0 ? static_cast<double>(count) * std::log(p) : 0.0;
  };
  return term(counts.n1, alpha.xi) + term(counts.n0, 1.0 - alpha.xi) +
         term(counts.n[1][1], 1.0 - alpha.omega_n) + term(counts.n[1][0], alpha.omega_n) +
         term(counts.n[0][1], alpha.omega_a) + term(counts.n[0][0], 1.0 - alpha.omega_a);
}

// ---- prepared sample ----

PreparedSample::PreparedSample(const OutcomeFamily& f, std::span<const ObservedRecord> records)
    : family_(&f) {
  const Support sup = f.support();
  const int K = f.dim();
  for (const auto& rec : records) {
    validate_record(rec);
    if (!rec.r) {
      ++n_missing_;
      continue;
    }
    if (!std::isfinite(rec.y)) throw data_format_error("observed outcome is not finite");
    if (!sup.contains(rec.y)) {
      ++n_dropped_;
      continue;
    }
    auto& cell = cells_[static_cast<size_t>(cell_index(rec.z, rec.d))];
    ++cell.count;
    cell.y.push_back(rec.y);
    double t[2];
    f.suff_stats(rec.y, t);
    for (int k = 0; k < K; ++k) cell.t.push_back(t[k]);
    cell.log_h.push_back(f.log_base(rec.y));
    ++n_observed_;
  }
}

CondLik conditional_log_likelihood(const PreparedSample& s, const OutcomeParams& params,
                                   const FirstStageParams& alpha) {
  return evaluate<false>(s, params, alpha, {});
}

CondLik conditional_log_likelihood(const PreparedSample& s, const OutcomeParams& params,
                                   const FirstStageParams& alpha, std::span<double> grad) {
  if (grad.size() != static_cast<size_t>(param_count(s.family())))
    throw parameter_error("gradient span has the wrong length");
  return evaluate<true>(s, params, alpha, grad);
}

CondLik conditional_log_likelihood(std::span<const ObservedRecord> records,
                                   const OutcomeFamily& f, const OutcomeParams& params,
                                   const FirstStageParams& alpha) {
  return conditional_log_likelihood(PreparedSample(f, records), params, alpha);
}

// ---- moment start ----

namespace {

struct CellMoments {
  long n = 0;
  double mean = 0, var = 0;          // of y
  double log_mean = 0, log_var = 0;  // of log y (supports on (0, inf) only)
};

CellMoments cell_moments(const PreparedSample::Cell& cell, bool with_logs) {
  CellMoments m;
  m.n = cell.count;
  if (m.n == 0) return m;
  double s1 = 0, s2 = 0, l1 = 0, l2 = 0;
  for (double y : cell.y) {
    s1 += y;
    s2 += y * y;
    if (with_logs) {
      const double ly = std::log(y);
      l1 += ly;
      l2 += ly * ly;
    }
  }
  const double n = static_cast<double>(m.n);
  m.mean = s1 / n;
  m.var = std::max(0.0, s2 / n - m.mean * m.mean);
  if (with_logs) {
    m.log_mean = l1 / n;
    m.log_var = std::max(0.0, l2 / n - m.log_mean * m.log_mean);
  }
  return m;
}

double pooled(const CellMoments mom[4], double CellMoments::* field, double fallback) {
  double num = 0;
  long den = 0;
  for (int c = 0; c < 4; ++c) {
    num += static_cast<double>(mom[c].n) * (mom[c].*field);
    den += mom[c].n;
  }
  return den > 0 && num > 0 ? num / static_cast<double>(den) : fallback;
}

}  // namespace

OutcomeParams moment_start(const PreparedSample& s) {
  const OutcomeFamily& f = s.family();
  const bool with_logs =
      f.id() == FamilyId::gamma || f.id() == FamilyId::lognormal;

  // Stratum read off each cell when mixing is ignored: (1,1) -> 1c,
  // (0,0) -> 0c, (0,1) -> a, (1,0) -> n.
  CellMoments mom[4];
  mom[k1c] = cell_moments(s.cell(1, 1), with_logs);
  mom[k0c] = cell_moments(s.cell(0, 0), with_logs);
  mom[ka] = cell_moments(s.cell(0, 1), with_logs);
  mom[kn] = cell_moments(s.cell(1, 0), with_logs);

  // Empty cells (eg perfect compliance) inherit the pooled mean.
  const double grand_mean = pooled(mom, &CellMoments::mean, 1.0);
  const double grand_log_mean = pooled(mom, &CellMoments::log_mean, 0.0);
  for (int c = 0; c < 4; ++c) {
    if (mom[c].n != 0) continue;
    mom[c].mean = grand_mean;
    mom[c].log_mean = grand_log_mean;
  }

  const double var_floor = std::max(1e-4, 1e-4 * grand_mean * grand_mean);
  const double pooled_var = std::max(pooled(mom, &CellMoments::var, 1.0), var_floor);
  const double pooled_log_var = std::max(pooled(mom, &CellMoments::log_var, 1.0), 1e-4);

  OutcomeParams p;
  auto blocks = [&](int c) -> std::vector<double>& {
    switch (c) {
      case k1c: return p.block_1c;
      case k0c: return p.block_0c;
      case ka: return p.block_a;
      default: return p.block_n;
    }
  };

  switch (f.id()) {
    case FamilyId::homo_normal:
      for (int c = 0; c < 4; ++c) blocks(c) = {mom[c].mean};
      p.shared = {pooled_var};
      break;
    case FamilyId::hetero_normal:
      for (int c = 0; c < 4; ++c)
        blocks(c) = {mom[c].mean, std::max(mom[c].n > 1 ? mom[c].var : pooled_var, var_floor)};
      break;
    case FamilyId::exponential:
      for (int c = 0; c < 4; ++c) blocks(c) = {1.0 / std::max(mom[c].mean, 1e-8)};
      break;
    case FamilyId::gamma: {
      // Shared rate from the pooled mean/variance ratio, shapes from means.
      const double rate = std::max(pooled(mom, &CellMoments::mean, 1.0), 1e-8) /
                          std::max(pooled_var, 1e-8);
      for (int c = 0; c < 4; ++c)
        blocks(c) = {std::max(mom[c].mean * rate, 1e-6)};
      p.shared = {rate};
      break;
    }
    case FamilyId::lognormal:
      for (int c = 0; c < 4; ++c) blocks(c) = {mom[c].log_mean};
      p.shared = {pooled_log_var};
      break;
  }
  validate_params(f, p);
  return p;
}

// ---- second stage ----

namespace {

std::string format_theta(const OutcomeFamily& f, const OutcomeParams& p) {
  std::ostringstream os;
  os.precision(6);
  const auto dump = [&](const char* label, const std::vector<double>& v) {
    os << label << "=(";
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ") ";
  };
  os << f.name() << ": ";
  dump("1c", p.block_1c);
  dump("0c", p.block_0c);
  dump("a", p.block_a);
  dump("n", p.block_n);
  if (!p.shared.empty()) dump("shared", p.shared);
  return os.str();
}

// Map between the natural (flat) parameter vector and the unconstrained
// optimizer coordinates: log scale for positivity-constrained entries.
std::vector<double> encode(const OutcomeFamily& f, const std::vector<double>& x) {
  const int bs = f.block_size();
  std::vector<double> u(x.size());
  for (size_t j = 0; j < x.size(); ++j) {
    const int local = j < static_cast<size_t>(4 * bs)
                          ? static_cast<int>(j) % bs
                          : bs + static_cast<int>(j - static_cast<size_t>(4 * bs));
    u[j] = f.positive_param(local) ? std::log(x[j]) : x[j];
  }
  return u;
}

std::vector<double> decode(const OutcomeFamily& f, std::span<const double> u) {
  const int bs = f.block_size();
  std::vector<double> x(u.size());
  for (size_t j = 0; j < u.size(); ++j) {
    const int local = j < static_cast<size_t>(4 * bs)
                          ? static_cast<int>(j) % bs
                          : bs + static_cast<int>(j - static_cast<size_t>(4 * bs));
    x[j] = f.positive_param(local) ? std::exp(u[j]) : u[j];
  }
  return x;
}

}  // namespace

SecondStageFit fit_second_stage(const PreparedSample& s, const FirstStageParams& alpha,
                                const SecondStageOptions& opts) {
  alpha.validate();
  const OutcomeFamily& f = s.family();
  if (s.n_observed() == 0)
    throw no_information_error("no observed outcomes: the conditional likelihood is empty");
  if (s.observed_in_cell(1, 0) > 0 && !(alpha.omega_n > 0.0))
    throw parameter_error("cell (1,0) is populated but omega_n = 0");
  if (s.observed_in_cell(0, 1) > 0 && !(alpha.omega_a > 0.0))
    throw parameter_error("cell (0,1) is populated but omega_a = 0");

  const int nparam = param_count(f);
  const int bs = f.block_size();

  // Jitter scale for unconstrained (mean-like) coordinates: the spread of the
  // first sufficient statistic, so starts stay data-scaled.
  double t_sum = 0, t_sq = 0;
  long t_n = 0;
  for (int z = 0; z < 2; ++z)
    for (int d = 0; d < 2; ++d) {
      const auto& cell = s.cell(z, d);
      const int K = f.dim();
      for (long i = 0; i < cell.count; ++i) {
        const double t1 = cell.t[static_cast<size_t>(i) * static_cast<size_t>(K)];
        t_sum += t1;
        t_sq += t1 * t1;
        ++t_n;
      }
    }
  const double t_mean = t_n > 0 ? t_sum / static_cast<double>(t_n) : 0.0;
  const double t_sd =
      t_n > 1 ? std::sqrt(std::max(0.0, t_sq / static_cast<double>(t_n) - t_mean * t_mean)) : 1.0;
  const double free_scale = t_sd > 0 ? t_sd : 1.0;

  const OutcomeParams base_start = opts.init ? *opts.init : moment_start(s);
  validate_params(f, base_start);
  const std::vector<double> base_flat = flatten_params(f, base_start);

  const Objective objective = [&](std::span<const double> u, std::span<double> grad_u) {
    const std::vector<double> x = decode(f, u);
    for (double v : x)
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    const OutcomeParams p = unflatten_params(f, x.data());
    std::vector<double> grad_x(static_cast<size_t>(nparam));
    const CondLik lik = conditional_log_likelihood(s, p, alpha, grad_x);
    for (size_t j = 0; j < grad_u.size(); ++j) {
      const int local = j < static_cast<size_t>(4 * bs)
                            ? static_cast<int>(j) % bs
                            : bs + static_cast<int>(j - static_cast<size_t>(4 * bs));
      grad_u[j] = -grad_x[j] * (f.positive_param(local) ? x[j] : 1.0);
    }
    return -lik.value;
  };

  OptimOptions oopts;
  oopts.grad_tol = opts.grad_tol;
  oopts.max_iters = opts.max_iters;

  SecondStageFit best;
  best.l2 = kNegInf;
  bool have_result = false;
  const int n_starts = 1 + std::max(opts.extra_starts, 0);

  for (int start = 0; start < n_starts; ++start) {
    std::vector<double> u0 = encode(f, base_flat);
    if (start > 0) {
      RngStream rng = RngStream::keyed(opts.seed, 0x57A27ULL, static_cast<uint64_t>(start));
      for (size_t j = 0; j < u0.size(); ++j) {
        const int local = j < static_cast<size_t>(4 * bs)
                              ? static_cast<int>(j) % bs
                              : bs + static_cast<int>(j - static_cast<size_t>(4 * bs));
        const double u = rng.uniform_range(-1.0, 1.0);
        // Positive parameters live on the log scale here, so an additive
        // nudge is a relative (+-jitter) change; means move by a data-scaled
        // amount.
        u0[j] += opts.jitter * u * (f.positive_param(local) ? 1.0 : free_scale);
      }
    }

    oopts.init_hessian_inv.clear();
    if (start == 0 && opts.init && !opts.init_hessian_inv.empty())
      oopts.init_hessian_inv = opts.init_hessian_inv;

    OptimResult r;
    try {
      r = minimize_bfgs(objective, u0, oopts);
    } catch (const numerical_error&) {
      continue;  // start failed outright; others may still work
    }
    if (r.converged) ++best.starts_converged;

    const double l2 = -r.value;
    const bool better = !have_result || l2 > best.l2 + 1e-9 ||
                        (l2 > best.l2 - 1e-9 && r.converged && !best.converged);
    if (better) {
      best.theta = unflatten_params(f, decode(f, r.x).data());
      best.l2 = l2;
      best.iterations = r.iterations;
      best.grad_norm = r.grad_norm;
      best.converged = r.converged;
      best.best_start = start;
      best.hessian_inv = std::move(r.hessian_inv);
      have_result = true;
    }
  }

  best.starts_tried = n_starts;
  best.dropped_records = s.n_dropped();
  if (!have_result || best.l2 == kNegInf)
    throw non_convergence_error("every optimizer start failed for the conditional likelihood");
  if (best.starts_converged == 0)
    throw non_convergence_error("no optimizer start converged; best attempt: " +
                                format_theta(f, best.theta));

  // Boundary escape: positivity-constrained coordinates collapsing to zero or
  // running away rank as failures, not estimates.
  const std::vector<double> flat = flatten_params(f, best.theta);
  for (size_t j = 0; j < flat.size(); ++j) {
    const int local = j < static_cast<size_t>(4 * bs)
                          ? static_cast<int>(j) % bs
                          : bs + static_cast<int>(j - static_cast<size_t>(4 * bs));
    if (f.positive_param(local) && (flat[j] < 1e-8 || flat[j] > 1e8))
      throw boundary_error("fitted parameter escaped to the boundary: " +
                           format_theta(f, best.theta));
  }
  return best;
}

// ---- two-step driver ----

FitResult fit_cace(std::span<const ObservedRecord> records, const OutcomeFamily& f,
                   const SecondStageOptions& opts) {
  const CountSummary counts = CountSummary::from_records(records);
  FitResult out;
  out.alpha = first_stage(counts);
  const PreparedSample prepared(f, records);
  for (int z = 0; z < 2; ++z)
    for (int d = 0; d < 2; ++d)
      if (counts.n[z][d] > 0 && prepared.observed_in_cell(z, d) == 0)
        throw no_information_error("cell (z=" + std::to_string(z) + ", d=" + std::to_string(d) +
                                   ") has records but no observed outcome");
  out.second = fit_second_stage(prepared, out.alpha, opts);
  out.cace = cace(f, out.second.theta);
  return out;
}

// ---- bootstrap ----

double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw parameter_error("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw parameter_error("quantile level must lie in [0,1]");
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

BootstrapSummary bootstrap_statistic(
    std::span<const ObservedRecord> records,
    const std::function<double(std::span<const ObservedRecord>)>& statistic,
    const BootstrapOptions& opts) {
  if (records.empty()) throw insufficient_data_error("cannot bootstrap an empty sample");
  if (opts.replicates < 1) throw parameter_error("bootstrap needs at least one replicate");
  const size_t n = records.size();
  const int B = opts.replicates;

  std::vector<double> estimates(static_cast<size_t>(B),
                                std::numeric_limits<double>::quiet_NaN());
  parallel_for(B, opts.threads, [&](long b) {
    RngStream rng = RngStream::keyed(opts.seed, 0xB00F57A9u, static_cast<uint64_t>(b));
    std::vector<ObservedRecord> resample(n);
    for (size_t i = 0; i < n; ++i) resample[i] = records[rng.uniform_int(n)];
    try {
      const double v = statistic(resample);
      if (std::isfinite(v)) estimates[static_cast<size_t>(b)] = v;
    } catch (const std::runtime_error&) {
      // counted below as a failed resample
    }
  });

  std::vector<double> kept;
  kept.reserve(static_cast<size_t>(B));
  for (double v : estimates)
    if (std::isfinite(v)) kept.push_back(v);

  BootstrapSummary out;
  out.replicates_requested = B;
  out.replicates_used = static_cast<int>(kept.size());
  out.failures = B - out.replicates_used;
  if (static_cast<double>(out.failures) > opts.max_failure_fraction * B)
    throw unstable_fit_error("bootstrap unstable: " + std::to_string(out.failures) + " of " +
                             std::to_string(B) + " resample fits failed");

  double mean = 0;
  for (double v : kept) mean += v;
  mean /= static_cast<double>(kept.size());
  double ss = 0;
  for (double v : kept) ss += (v - mean) * (v - mean);
  out.standard_error =
      kept.size() > 1 ? std::sqrt(ss / static_cast<double>(kept.size() - 1)) : 0.0;

  std::sort(kept.begin(), kept.end());
  const double aw = (1.0 - opts.level_wide) / 2.0;
  const double an = (1.0 - opts.level_narrow) / 2.0;
  out.ci95_lo = quantile_type7(kept, aw);
  out.ci95_hi = quantile_type7(kept, 1.0 - aw);
  out.ci90_lo = quantile_type7(kept, an);
  out.ci90_hi = quantile_type7(kept, 1.0 - an);
  return out;
}

FitResult fit_cace_with_bootstrap(std::span<const ObservedRecord> records, const OutcomeFamily& f,
                                  const SecondStageOptions& fit_opts,
                                  const BootstrapOptions& boot_opts) {
  FitResult base = fit_cace(records, f, fit_opts);

  SecondStageOptions warm = fit_opts;
  warm.init = base.second.theta;
  warm.init_hessian_inv = base.second.hessian_inv;
  warm.extra_starts = 0;
  const auto statistic = [&](std::span<const ObservedRecord> resample) {
    try {
      return fit_cace(resample, f, warm).cace;
    } catch (const numerical_error&) {
      // cold restart with the full start policy before giving up
      return fit_cace(resample, f, fit_opts).cace;
    }
  };
  base.bootstrap = bootstrap_statistic(records, statistic, boot_opts);
  return base;
}

}  // namespace cace
