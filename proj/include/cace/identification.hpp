#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "cace/families.hpp"
#include "cace/records.hpp"

namespace cace {

// Probabilities of the four (Z,D) cells conditional on Y = y and R = 1.
// The missingness probability rho(y) cancels from these, which is why the
// signature carries no missingness argument.
struct CellProbabilities {
  double p11 = 0, p10 = 0, p01 = 0, p00 = 0;

  double sum() const { return p11 + p10 + p01 + p00; }
};

CellProbabilities cell_probabilities(const OutcomeFamily& f, const OutcomeParams& params,
                                     const FirstStageParams& alpha, double y);

// Log cell masses before normalization; log_norm is logsumexp of the four.
// Exposed for the likelihood path.
struct LogCellMasses {
  double lm11, lm10, lm01, lm00;
  double log_norm;
};
LogCellMasses log_cell_masses(const OutcomeFamily& f, const OutcomeParams& params,
                              const FirstStageParams& alpha, double y);

// The three conditional log-odds, computed from the cells and xi:
//   [0] log{ p10 (1-xi) / (p01 xi) }
//   [1] log{ p00 xi / (p10 (1-xi)) - 1 }
//   [2] log{ p11 (1-xi) / (p01 xi) - 1 }
std::array<double, 3> log_odds_contrasts(const OutcomeFamily& f, const OutcomeParams& params,
                                         const FirstStageParams& alpha, double y);

// The identifiable vector eta: for each k the three natural-parameter
// contrasts p_k(theta_n)-p_k(theta_a), p_k(theta_1c)-p_k(theta_a),
// p_k(theta_0c)-p_k(theta_n), followed by the same three contrasts of the
// log-normalizer. Length 3(K+1).
struct IdentifiedVector {
  int K = 0;
  std::vector<double> values;
};
IdentifiedVector identified_vector(const OutcomeFamily& f, const OutcomeParams& params);

// Evaluate the right-hand sides of the three log-odds relations at y from the
// identified vector and the compliance margins.
std::array<double, 3> log_odds_from_eta(const OutcomeFamily& f, const IdentifiedVector& eta,
                                        const FirstStageParams& alpha, double y);

// Intercept/slope form a_i y + b_i of the three log-odds relations, for
// families where the relations are linear in y itself (homoskedastic normal
// and exponential).
struct GlmCoefficients {
  double a1 = 0, b1 = 0, a2 = 0, b2 = 0, a3 = 0, b3 = 0;
};

GlmCoefficients glm_forward(const OutcomeFamily& f, const OutcomeParams& params,
                            const FirstStageParams& alpha);

// Closed-form parameter recovery from the log-odds coefficients.
OutcomeParams recover_normal(const GlmCoefficients& g, const FirstStageParams& alpha);
OutcomeParams recover_exponential(const GlmCoefficients& g, const FirstStageParams& alpha);

// Necessary dimension condition for a one-to-one map from the 4K stratum
// parameters of the polynomial family to the 3(K+1) identified contrasts.
struct DimensionCheck {
  int K = 0;
  long unknowns = 0;    // 4K
  long identified = 0;  // 3(K+1)
  bool pass = false;
};
DimensionCheck mapping_dimension_check(int K);

// Full log-likelihood over (alpha, theta, rho). Missing-cell factors use
// adaptive quadrature of (1 - rho(y)) against the stratum densities. This is
// a test oracle: it is evaluated, never optimized over rho.
double full_log_likelihood(std::span<const ObservedRecord> records, const OutcomeFamily& f,
                           const OutcomeParams& params, const FirstStageParams& alpha,
                           const std::function<double(double)>& rho);

}  // namespace cace
