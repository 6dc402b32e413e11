#include "cace/families.hpp"

#include <cmath>
#include <limits>

namespace cace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

void check_finite(const double* x, int n, const char* what) {
  for (int j = 0; j < n; ++j)
    if (!std::isfinite(x[j])) throw parameter_error(std::string(what) + " must be finite");
}

// ---- homoskedastic normal: block {mu}, shared {sigma2}, K = 2, T = (y, y^2) ----

class HomoNormal final : public OutcomeFamily {
 public:
  FamilyId id() const override { return FamilyId::homo_normal; }
  const char* name() const override { return "homo_normal"; }
  int dim() const override { return 2; }
  int block_size() const override { return 1; }
  int shared_size() const override { return 1; }
  Support support() const override { return {-kInf, kInf, false}; }

  void validate_block(const double* b) const override { check_finite(b, 1, "mu"); }
  void validate_shared(const double* s) const override {
    check_finite(s, 1, "sigma2");
    if (!(s[0] > 0.0)) throw parameter_error("sigma2 must be positive");
  }

  NaturalView natural_view(const double* b, const double* s) const override {
    const double mu = b[0], s2 = s[0];
    const double inv = 1.0 / s2;
    NaturalView v;
    v.K = 2;
    v.nparam = 2;
    v.p = {mu * inv, -0.5 * inv};
    v.log_c = -0.5 * mu * mu * inv - 0.5 * (kLogTwoPi + std::log(s2));
    v.dp[0] = {inv, -mu * inv * inv};      // d p1 / d(mu, sigma2)
    v.dp[1] = {0.0, 0.5 * inv * inv};      // d p2 / d(mu, sigma2)
    v.dlog_c = {-mu * inv, 0.5 * mu * mu * inv * inv - 0.5 * inv};
    return v;
  }

  void suff_stats(double y, double* t) const override {
    t[0] = y;
    t[1] = y * y;
  }
  double log_base(double) const override { return 0.0; }
  double mean(const double* b, const double*) const override { return b[0]; }
  bool positive_param(int j) const override { return j == 1; }
};

// ---- heteroskedastic normal: block {mu, sigma2}, no shared, K = 2 ----

class HeteroNormal final : public OutcomeFamily {
 public:
  FamilyId id() const override { return FamilyId::hetero_normal; }
  const char* name() const override { return "hetero_normal"; }
  int dim() const override { return 2; }
  int block_size() const override { return 2; }
  int shared_size() const override { return 0; }
  Support support() const override { return {-kInf, kInf, false}; }

  void validate_block(const double* b) const override {
    check_finite(b, 2, "(mu, sigma2)");
    if (!(b[1] > 0.0)) throw parameter_error("sigma2 must be positive");
  }

  NaturalView natural_view(const double* b, const double*) const override {
    const double mu = b[0], s2 = b[1];
    const double inv = 1.0 / s2;
    NaturalView v;
    v.K = 2;
    v.nparam = 2;
    v.p = {mu * inv, -0.5 * inv};
    v.log_c = -0.5 * mu * mu * inv - 0.5 * (kLogTwoPi + std::log(s2));
    v.dp[0] = {inv, -mu * inv * inv};
    v.dp[1] = {0.0, 0.5 * inv * inv};
    v.dlog_c = {-mu * inv, 0.5 * mu * mu * inv * inv - 0.5 * inv};
    return v;
  }

  void suff_stats(double y, double* t) const override {
    t[0] = y;
    t[1] = y * y;
  }
  double log_base(double) const override { return 0.0; }
  double mean(const double* b, const double*) const override { return b[0]; }
  bool positive_param(int j) const override { return j == 1; }
};

// ---- exponential: block {lambda}, K = 1, T = y, support [0, inf) ----

class Exponential final : public OutcomeFamily {
 public:
  FamilyId id() const override { return FamilyId::exponential; }
  const char* name() const override { return "exponential"; }
  int dim() const override { return 1; }
  int block_size() const override { return 1; }
  int shared_size() const override { return 0; }
  Support support() const override { return {0.0, kInf, true}; }

  void validate_block(const double* b) const override {
    check_finite(b, 1, "lambda");
    if (!(b[0] > 0.0)) throw parameter_error("lambda must be positive");
  }

  NaturalView natural_view(const double* b, const double*) const override {
    const double lam = b[0];
    NaturalView v;
    v.K = 1;
    v.nparam = 1;
    v.p = {-lam, 0.0};
    v.log_c = std::log(lam);
    v.dp[0] = {-1.0, 0.0};
    v.dlog_c = {1.0 / lam, 0.0};
    return v;
  }

  void suff_stats(double y, double* t) const override { t[0] = y; }
  double log_base(double) const override { return 0.0; }
  double mean(const double* b, const double*) const override { return 1.0 / b[0]; }
  bool positive_param(int) const override { return true; }
};

// ---- Gamma: block {shape}, shared {rate}, K = 2, T = (log y, y) ----

class Gamma final : public OutcomeFamily {
 public:
  FamilyId id() const override { return FamilyId::gamma; }
  const char* name() const override { return "gamma"; }
  int dim() const override { return 2; }
  int block_size() const override { return 1; }
  int shared_size() const override { return 1; }
  Support support() const override { return {0.0, kInf, false}; }

  void validate_block(const double* b) const override {
    check_finite(b, 1, "shape");
    if (!(b[0] > 0.0)) throw parameter_error("shape must be positive");
  }
  void validate_shared(const double* s) const override {
    check_finite(s, 1, "rate");
    if (!(s[0] > 0.0)) throw parameter_error("rate must be positive");
  }

  NaturalView natural_view(const double* b, const double* s) const override {
    const double shape = b[0], rate = s[0];
    NaturalView v;
    v.K = 2;
    v.nparam = 2;
    v.p = {shape - 1.0, -rate};
    v.log_c = shape * std::log(rate) - std::lgamma(shape);
    v.dp[0] = {1.0, 0.0};
    v.dp[1] = {0.0, -1.0};
    v.dlog_c = {std::log(rate) - digamma(shape), shape / rate};
    return v;
  }

  void suff_stats(double y, double* t) const override {
    t[0] = std::log(y);
    t[1] = y;
  }
  double log_base(double) const override { return 0.0; }
  double mean(const double* b, const double* s) const override { return b[0] / s[0]; }
  bool positive_param(int) const override { return true; }

  // Digamma by upward recurrence plus the asymptotic series; |err| < 1e-12
  // for x > 0.
  static double digamma(double x) {
    double result = 0.0;
    while (x < 6.0) {
      result -= 1.0 / x;
      x += 1.0;
    }
    const double inv = 1.0 / x, inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
  }
};

// ---- lognormal: block {mu}, shared {sigma2}, K = 2, T = (log y, log^2 y) ----

class Lognormal final : public OutcomeFamily {
 public:
  FamilyId id() const override { return FamilyId::lognormal; }
  const char* name() const override { return "lognormal"; }
  int dim() const override { return 2; }
  int block_size() const override { return 1; }
  int shared_size() const override { return 1; }
  Support support() const override { return {0.0, kInf, false}; }

  void validate_block(const double* b) const override { check_finite(b, 1, "mu"); }
  void validate_shared(const double* s) const override {
    check_finite(s, 1, "sigma2");
    if (!(s[0] > 0.0)) throw parameter_error("sigma2 must be positive");
  }

  NaturalView natural_view(const double* b, const double* s) const override {
    const double mu = b[0], s2 = s[0];
    const double inv = 1.0 / s2;
    NaturalView v;
    v.K = 2;
    v.nparam = 2;
    v.p = {mu * inv, -0.5 * inv};
    v.log_c = -0.5 * mu * mu * inv - 0.5 * (kLogTwoPi + std::log(s2));
    v.dp[0] = {inv, -mu * inv * inv};
    v.dp[1] = {0.0, 0.5 * inv * inv};
    v.dlog_c = {-mu * inv, 0.5 * mu * mu * inv * inv - 0.5 * inv};
    return v;
  }

  void suff_stats(double y, double* t) const override {
    const double ly = std::log(y);
    t[0] = ly;
    t[1] = ly * ly;
  }
  double log_base(double y) const override { return -std::log(y); }
  double mean(const double* b, const double* s) const override {
    return std::exp(b[0] + 0.5 * s[0]);
  }
  bool positive_param(int j) const override { return j == 1; }
};

const HomoNormal g_homo_normal;
const HeteroNormal g_hetero_normal;
const Exponential g_exponential;
const Gamma g_gamma;
const Lognormal g_lognormal;

}  // namespace

const OutcomeFamily& get_family(FamilyId id) {
  switch (id) {
    case FamilyId::homo_normal: return g_homo_normal;
    case FamilyId::hetero_normal: return g_hetero_normal;
    case FamilyId::exponential: return g_exponential;
    case FamilyId::gamma: return g_gamma;
    case FamilyId::lognormal: return g_lognormal;
  }
  throw config_error("unknown family id");
}

const OutcomeFamily& get_family(std::string_view name) {
  for (FamilyId id : {FamilyId::homo_normal, FamilyId::hetero_normal, FamilyId::exponential,
                      FamilyId::gamma, FamilyId::lognormal}) {
    const OutcomeFamily& f = get_family(id);
    if (name == f.name()) return f;
  }
  // tolerated aliases
  if (name == "homo-normal" || name == "normal") return g_homo_normal;
  if (name == "hetero-normal") return g_hetero_normal;
  throw config_error("unknown outcome family: " + std::string(name));
}

const char* family_name(FamilyId id) { return get_family(id).name(); }

int param_count(const OutcomeFamily& f) { return 4 * f.block_size() + f.shared_size(); }

void validate_params(const OutcomeFamily& f, const OutcomeParams& p) {
  const auto bs = static_cast<size_t>(f.block_size());
  const auto ss = static_cast<size_t>(f.shared_size());
  if (p.block_1c.size() != bs || p.block_0c.size() != bs || p.block_a.size() != bs ||
      p.block_n.size() != bs || p.shared.size() != ss)
    throw parameter_error("parameter block sizes do not match the family layout");
  f.validate_block(p.block_1c.data());
  f.validate_block(p.block_0c.data());
  f.validate_block(p.block_a.data());
  f.validate_block(p.block_n.data());
  if (ss > 0) f.validate_shared(p.shared.data());
}

std::vector<double> flatten_params(const OutcomeFamily& f, const OutcomeParams& p) {
  std::vector<double> x;
  x.reserve(static_cast<size_t>(param_count(f)));
  for (const auto* blk : {&p.block_1c, &p.block_0c, &p.block_a, &p.block_n})
    x.insert(x.end(), blk->begin(), blk->end());
  x.insert(x.end(), p.shared.begin(), p.shared.end());
  return x;
}

OutcomeParams unflatten_params(const OutcomeFamily& f, const double* x) {
  const int bs = f.block_size(), ss = f.shared_size();
  OutcomeParams p;
  p.block_1c.assign(x, x + bs);
  p.block_0c.assign(x + bs, x + 2 * bs);
  p.block_a.assign(x + 2 * bs, x + 3 * bs);
  p.block_n.assign(x + 3 * bs, x + 4 * bs);
  p.shared.assign(x + 4 * bs, x + 4 * bs + ss);
  return p;
}

double log_density(const OutcomeFamily& f, const double* block, const double* shared, double y) {
  if (!f.support().contains(y))
    throw domain_error(std::string("y outside the support of the ") + f.name() + " family");
  f.validate_block(block);
  if (f.shared_size() > 0) f.validate_shared(shared);
  const auto v = f.natural_view(block, shared);
  double t[2];
  f.suff_stats(y, t);
  double lp = v.log_c + f.log_base(y);
  for (int k = 0; k < v.K; ++k) lp += v.p[k] * t[k];
  return lp;
}

double density(const OutcomeFamily& f, const double* block, const double* shared, double y) {
  return std::exp(log_density(f, block, shared, y));
}

void log_density_grad(const OutcomeFamily& f, const double* block, const double* shared,
                      double y, double* out) {
  const auto v = f.natural_view(block, shared);
  double t[2];
  f.suff_stats(y, t);
  for (int j = 0; j < v.nparam; ++j) {
    double g = v.dlog_c[j];
    for (int k = 0; k < v.K; ++k) g += v.dp[k][j] * t[k];
    out[j] = g;
  }
}

double stratum_mean(const OutcomeFamily& f, const OutcomeParams& p, Stratum u, int z) {
  const double* shared = p.shared.empty() ? nullptr : p.shared.data();
  switch (u) {
    case Stratum::complier: return f.mean(z ? p.block_1c.data() : p.block_0c.data(), shared);
    case Stratum::always_taker: return f.mean(p.block_a.data(), shared);
    case Stratum::never_taker: return f.mean(p.block_n.data(), shared);
  }
  throw domain_error("bad stratum");
}

double cace(const OutcomeFamily& f, const OutcomeParams& p) {
  validate_params(f, p);
  const double* shared = p.shared.empty() ? nullptr : p.shared.data();
  return f.mean(p.block_1c.data(), shared) - f.mean(p.block_0c.data(), shared);
}

}  // namespace cace
