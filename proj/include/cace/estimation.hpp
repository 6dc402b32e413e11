#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cace/families.hpp"
#include "cace/records.hpp"

namespace cace {

// ---- first stage: design and compliance margins ----

// Closed-form MLE (xi, omega_n, omega_a) = (N1/N, n10/N1, n01/N0).
FirstStageParams first_stage(const CountSummary& counts);
FirstStageParams first_stage(std::span<const ObservedRecord> records);

// The randomization/compliance factor of the log-likelihood at alpha.
double first_stage_log_likelihood(const CountSummary& counts, const FirstStageParams& alpha);

// ---- conditional likelihood of (Z,D) given an observed outcome ----

// Observed outcomes grouped by (z,d) cell, with sufficient statistics and
// log base measure cached. This is the evaluation hot path: everything that
// does not depend on the parameters is computed once here.
class PreparedSample {
 public:
  PreparedSample(const OutcomeFamily& f, std::span<const ObservedRecord> records);

  const OutcomeFamily& family() const { return *family_; }
  long n_observed() const { return n_observed_; }
  long n_missing() const { return n_missing_; }
  // Observed outcomes outside the family support: every stratum density is
  // zero there, so the conditional cell probability is undefined and the
  // record is dropped from the conditional likelihood (and counted).
  long n_dropped() const { return n_dropped_; }

  struct Cell {
    long count = 0;
    std::vector<double> y;
    std::vector<double> t;      // K sufficient statistics per outcome, contiguous
    std::vector<double> log_h;  // base-measure term per outcome
  };
  static int cell_index(int z, int d) { return 2 * z + d; }
  const Cell& cell(int z, int d) const { return cells_[static_cast<size_t>(cell_index(z, d))]; }
  long observed_in_cell(int z, int d) const { return cell(z, d).count; }

 private:
  const OutcomeFamily* family_;
  std::array<Cell, 4> cells_{};
  long n_observed_ = 0, n_missing_ = 0, n_dropped_ = 0;
};

struct CondLik {
  double value = 0.0;
  long dropped = 0;  // support-violating records excluded from the sum
};

// Sum over observed records of log P(Z=z_i, D=d_i | Y=y_i, R=1). The
// outcome-dependent response probability cancels from these conditional cell
// probabilities, so no missingness model enters.
CondLik conditional_log_likelihood(const PreparedSample& s, const OutcomeParams& params,
                                   const FirstStageParams& alpha);

// Same value plus the analytic gradient in the flattened parameter layout
// [block_1c, block_0c, block_a, block_n, shared]. grad must have length
// param_count(family).
CondLik conditional_log_likelihood(const PreparedSample& s, const OutcomeParams& params,
                                   const FirstStageParams& alpha, std::span<double> grad);

CondLik conditional_log_likelihood(std::span<const ObservedRecord> records,
                                   const OutcomeFamily& f, const OutcomeParams& params,
                                   const FirstStageParams& alpha);

// ---- second stage: maximize the conditional likelihood over theta ----

struct SecondStageOptions {
  double grad_tol = 1e-6;
  int max_iters = 500;
  // Start policy: one moment-based start plus `extra_starts` jittered copies
  // (+-20% by default). `init`, when given, replaces the moment start.
  int extra_starts = 4;
  double jitter = 0.2;
  std::uint64_t seed = 0;
  std::optional<OutcomeParams> init;
  // Optional curvature seed for the un-jittered start, in the optimizer's
  // unconstrained coordinates; taken from a previous fit on related data.
  std::vector<double> init_hessian_inv;
};

struct SecondStageFit {
  OutcomeParams theta;
  double l2 = 0.0;          // conditional log-likelihood at theta
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  int best_start = 0;       // 0 = moment (or supplied) start
  int starts_tried = 0;
  int starts_converged = 0;
  long dropped_records = 0;
  // Final inverse-Hessian model in unconstrained coordinates; reusable as
  // init_hessian_inv when refitting resampled copies of the same data.
  std::vector<double> hessian_inv;
};

// Multi-start quasi-Newton maximization of the conditional likelihood in an
// unconstrained reparameterization (log scale for positive parameters).
// Throws non_convergence_error when no start converges and boundary_error
// when the winning theta has escaped toward the parameter-space boundary.
SecondStageFit fit_second_stage(const PreparedSample& s, const FirstStageParams& alpha,
                                const SecondStageOptions& opts = {});

// Data-driven starting point: complete-case moments per (z,d) cell, each cell
// read as a pure stratum sample (mixing ignored).
OutcomeParams moment_start(const PreparedSample& s);

// ---- two-step driver and bootstrap ----

struct BootstrapSummary {
  double standard_error = 0.0;
  double ci95_lo = 0.0, ci95_hi = 0.0;
  double ci90_lo = 0.0, ci90_hi = 0.0;
  int replicates_requested = 0;
  int replicates_used = 0;
  int failures = 0;
};

struct FitResult {
  FirstStageParams alpha;
  SecondStageFit second;
  double cace = 0.0;  // always recomputed from second.theta
  std::optional<BootstrapSummary> bootstrap;
};

// First stage then second stage. Requires every populated (z,d) cell to hold
// at least one observed outcome (no_information_error otherwise).
FitResult fit_cace(std::span<const ObservedRecord> records, const OutcomeFamily& f,
                   const SecondStageOptions& opts = {});

struct BootstrapOptions {
  int replicates = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  double max_failure_fraction = 0.2;
  double level_wide = 0.95;    // reported as the 95% interval
  double level_narrow = 0.90;  // reported as the 90% interval
};

// Generic percentile bootstrap of a scalar statistic over record resamples.
// Resample b is drawn from a stream keyed by (seed, b), so results are
// deterministic and independent of the thread count. Statistic failures
// (runtime errors, non-finite values) are dropped and counted; more than
// max_failure_fraction of them raises unstable_fit_error.
BootstrapSummary bootstrap_statistic(
    std::span<const ObservedRecord> records,
    const std::function<double(std::span<const ObservedRecord>)>& statistic,
    const BootstrapOptions& opts);

// Two-step fit with bootstrap inference over both stages. Resample fits are
// warm-started at the full-data theta-hat and fall back to the full start
// policy before counting a failure.
FitResult fit_cace_with_bootstrap(std::span<const ObservedRecord> records, const OutcomeFamily& f,
                                  const SecondStageOptions& fit_opts,
                                  const BootstrapOptions& boot_opts);

// Quantile with linear interpolation between order statistics (the common
// "type 7" definition); `sorted` must be ascending and non-empty.
double quantile_type7(std::span<const double> sorted, double p);

}  // namespace cace
