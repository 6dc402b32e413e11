#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "cace/errors.hpp"
#include "cace/records.hpp"

namespace cace {

enum class FamilyId { homo_normal, hetero_normal, exponential, gamma, lognormal };

struct Support {
  double lo, hi;
  bool lo_closed;  // hi is always open (+inf)

  bool contains(double y) const { return (lo_closed ? y >= lo : y > lo) && y < hi; }
};

// Stratum-level outcome parameters. Blocks are family-specific vectors
// (see each family's block layout); the exclusion restriction is structural:
// always-takers and never-takers have a single block each, shared across arms.
// `shared` holds the common nuisance (sigma^2 or the Gamma rate) when the
// family has one.
struct OutcomeParams {
  std::vector<double> block_1c, block_0c, block_a, block_n;
  std::vector<double> shared;
};

// Exponential-family outcome model
//   f(y | theta) = c(theta) h(y) exp{ sum_k p_k(theta) T_k(y) },
// exposed through its natural parameters, sufficient statistics, normalizer
// and base measure. All shipped families have K <= 2 and at most 2 free
// parameters per stratum component.
class OutcomeFamily {
 public:
  // Natural-parameter view of one component at fixed parameters, with the
  // Jacobians wrt that component's own parameters (block entries first, then
  // shared entries). The likelihood hot path caches one view per component.
  struct NaturalView {
    int K = 0;
    int nparam = 0;  // block_size + shared_size
    std::array<double, 2> p{};
    double log_c = 0.0;
    std::array<std::array<double, 2>, 2> dp{};  // dp[k][j]
    std::array<double, 2> dlog_c{};
  };

  virtual ~OutcomeFamily() = default;

  virtual FamilyId id() const = 0;
  virtual const char* name() const = 0;
  virtual int dim() const = 0;  // K
  virtual int block_size() const = 0;
  virtual int shared_size() const = 0;
  virtual Support support() const = 0;

  virtual void validate_block(const double* b) const = 0;
  virtual void validate_shared(const double* /*s*/) const {}

  virtual NaturalView natural_view(const double* b, const double* s) const = 0;
  virtual void suff_stats(double y, double* t) const = 0;
  virtual double log_base(double y) const = 0;
  virtual double mean(const double* b, const double* s) const = 0;

  // True if the j-th parameter of the flattened component (block then shared)
  // is positivity-constrained and should be optimized on the log scale.
  virtual bool positive_param(int j) const = 0;
};

const OutcomeFamily& get_family(FamilyId id);
const OutcomeFamily& get_family(std::string_view name);  // throws config_error
const char* family_name(FamilyId id);

// ---- parameter plumbing ----

int param_count(const OutcomeFamily& f);  // 4 * block_size + shared_size
void validate_params(const OutcomeFamily& f, const OutcomeParams& p);

// Flattened layout: [block_1c, block_0c, block_a, block_n, shared].
std::vector<double> flatten_params(const OutcomeFamily& f, const OutcomeParams& p);
OutcomeParams unflatten_params(const OutcomeFamily& f, const double* x);

// ---- density and CACE ----

double log_density(const OutcomeFamily& f, const double* block, const double* shared, double y);
double density(const OutcomeFamily& f, const double* block, const double* shared, double y);

// Gradient of log f(y) wrt the component's parameters (block then shared).
void log_density_grad(const OutcomeFamily& f, const double* block, const double* shared,
                      double y, double* out);

double stratum_mean(const OutcomeFamily& f, const OutcomeParams& p, Stratum u, int z);

// Complier average causal effect implied by the stratum parameters:
// mean under theta_1c minus mean under theta_0c.
double cace(const OutcomeFamily& f, const OutcomeParams& p);

}  // namespace cace
