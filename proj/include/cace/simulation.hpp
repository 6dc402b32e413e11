#pragma once

#include <array>
#include <string>
#include <vector>

#include "cace/estimation.hpp"
#include "cace/families.hpp"
#include "cace/li.hpp"
#include "cace/records.hpp"
#include "cace/rng.hpp"

namespace cace {

// Stratum outcome laws, one per component in the order 1c, 0c, a, n (the
// always/never-taker laws are arm-free by construction, which is the
// compound exclusion restriction).
struct OutcomeLaw {
  enum class Kind { exp_family, uniform, t_shift };
  Kind kind = Kind::exp_family;

  // exp_family
  FamilyId family = FamilyId::homo_normal;
  OutcomeParams params;

  // uniform: [lo, hi] per component
  std::array<std::array<double, 2>, 4> uniform_bounds{};

  // t_shift: Student t with `t_df` degrees of freedom, shifted per component
  // (pure location shift; the t scale is left untouched)
  double t_df = 4.0;
  std::array<double, 4> t_shift{};

  double draw(Stratum u, int z, RngStream& rng) const;
  double component_mean(Stratum u, int z) const;
  double true_cace() const;  // complier mean difference, recomputed
};

// Response model R | (stratum, treatment received, complete outcome).
struct MissingMechanism {
  enum class Kind { odn_step, li, dy, dyu };
  Kind kind = Kind::odn_step;

  // odn_step: rho(y) is a three-level step in y only
  double step_at = 2.0, step_at_hi = 7.0;
  double p_low = 1.0, p_mid = 1.0, p_high = 1.0;

  // li: response probabilities for (d,u) = (1,c), (0,c), (0,n), (1,a)
  std::array<double, 4> gamma{1, 1, 1, 1};

  double response_prob(Stratum u, int d, double y) const;
  void validate() const;
};

struct Scenario {
  std::string name;
  FirstStageParams alpha;
  OutcomeLaw law;
  MissingMechanism mechanism;
  // Family the outcome-dependent-missingness fit assumes for this scenario
  // (deliberately misspecified in the violation cases).
  FamilyId fit_family = FamilyId::homo_normal;

  double true_cace() const { return law.true_cace(); }
  void validate() const;
};

// All named scenarios: the four exponential-family designs, the five
// violation cases (heter, unif, t, dy, dyu) and the four latent-ignorable
// mechanisms li1..li4.
std::vector<Scenario> scenario_catalog();
const Scenario& find_scenario(std::string_view name);  // throws config_error

// The outcome-dependent sensitivity family rho(y; delta): 0.9 everywhere,
// lowered to 0.9 - delta below the first step and 0.9 - 2*delta above the
// second. delta must lie in (0, 0.45] to keep probabilities positive.
Scenario odn_delta_scenario(double delta);

// Hidden truth for oracle tests, parallel to the emitted records.
struct TruthRecord {
  Stratum u = Stratum::complier;
  double y_complete = 0.0;  // outcome before any blanking
};

struct GeneratedData {
  std::vector<ObservedRecord> records;
  std::vector<TruthRecord> truth;
};

// Draws n records; record i consumes only the stream keyed by (seed, i), so
// the output is reproducible and independent of any threading above it.
GeneratedData generate(const Scenario& sc, long n, std::uint64_t seed);

// ---- Monte-Carlo study driver ----

enum class Method { odn, li };
const char* method_name(Method m);
Method parse_method(std::string_view name);  // throws config_error

struct StudyOptions {
  long n = 2000;
  int reps = 1000;
  int bootstrap_replicates = 200;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct StudyReport {
  std::string scenario;
  Method method = Method::odn;
  long n = 0;
  double truth = 0.0;
  int reps_requested = 0;
  int reps_used = 0;
  int failures = 0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double std_dev = 0.0;  // NaN when fewer than two usable replicates
  double cp95 = 0.0;
  double ci95_lo_mean = 0.0, ci95_hi_mean = 0.0;
};

// generate -> fit(method) -> bootstrap, repeated `reps` times with split
// seeds; failures are counted, never fatal. Aggregation is slot-ordered and
// therefore identical for every thread count.
StudyReport monte_carlo(const Scenario& sc, Method method, const StudyOptions& opts);

}  // namespace cace
