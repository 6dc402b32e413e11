#pragma once

#include <optional>
#include <span>

#include "cace/estimation.hpp"
#include "cace/records.hpp"

namespace cace {

// Latent-ignorable benchmark model: homoskedastic normal outcomes per
// stratum, and a response probability that depends on (treatment received,
// stratum) only — never on the outcome itself. The four realizable pairs are
// (d,u) = (1,complier), (0,complier), (0,never-taker), (1,always-taker).
struct LiParams {
  FirstStageParams alpha;
  double mu_1c = 0, mu_0c = 0, mu_a = 0, mu_n = 0;
  double sigma2 = 1;
  double gamma_1c = 1, gamma_0c = 1, gamma_0n = 1, gamma_1a = 1;

  void validate() const;
};

struct LiOptions {
  double tol = 1e-8;      // stop when the log-likelihood gain drops below this
  int max_iter = 5000;
  int extra_starts = 4;   // jittered starts beyond the moment start
  double jitter = 0.2;
  std::uint64_t seed = 0;
  std::optional<LiParams> init;
  bool pool_gamma = false;  // constrain all four response probabilities equal
};

struct LiFit {
  LiParams params;
  double log_likelihood = 0;
  double cace = 0;  // mu_1c - mu_0c
  int iterations = 0;
  bool converged = false;
  int best_start = 0;
  int starts_tried = 0;
  int starts_converged = 0;
};

// EM over the latent stratum labels. The assignment probability xi is fixed
// at its closed-form estimate; stratum proportions, normal blocks, the shared
// variance and the response probabilities are updated each iteration. The
// observed-data log-likelihood must be non-decreasing along the way; a
// decrease beyond 1e-10 raises implementation_fault.
LiFit li_em_fit(std::span<const ObservedRecord> records, const LiOptions& opts = {});

// Observed-data log-likelihood of the LI model (records with r=0 contribute
// their stratum weight times 1 - gamma; the outcome integrates out).
double li_log_likelihood(std::span<const ObservedRecord> records, const LiParams& p);

struct LiFitResult {
  LiFit fit;
  std::optional<BootstrapSummary> bootstrap;
};

// EM fit plus percentile bootstrap of the CACE over record resamples,
// mirroring the two-step estimator's bootstrap contract.
LiFitResult li_fit_with_bootstrap(std::span<const ObservedRecord> records, const LiOptions& opts,
                                  const BootstrapOptions& boot_opts);

}  // namespace cace
