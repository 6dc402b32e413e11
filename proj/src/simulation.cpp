#include "cace/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cace/parallel.hpp"

namespace cace {

namespace {

constexpr std::uint64_t kRecordSalt = 0xDA7AF00DULL;
constexpr std::uint64_t kReplicateSalt = 0x5EED5A17ULL;

// Component index within the 1c, 0c, a, n layout.
int component_of(Stratum u, int z) {
  switch (u) {
    case Stratum::complier: return z == 1 ? 0 : 1;
    case Stratum::always_taker: return 2;
    case Stratum::never_taker: return 3;
  }
  throw domain_error("bad stratum");
}

const std::vector<double>& family_block(const OutcomeParams& p, int comp) {
  switch (comp) {
    case 0: return p.block_1c;
    case 1: return p.block_0c;
    case 2: return p.block_a;
    default: return p.block_n;
  }
}

}  // namespace

double OutcomeLaw::draw(Stratum u, int z, RngStream& rng) const {
  const int comp = component_of(u, z);
  switch (kind) {
    case Kind::exp_family: {
      const auto& b = family_block(params, comp);
      switch (family) {
        case FamilyId::homo_normal: return rng.normal(b[0], std::sqrt(params.shared[0]));
        case FamilyId::hetero_normal: return rng.normal(b[0], std::sqrt(b[1]));
        case FamilyId::exponential: return rng.exponential(b[0]);
        case FamilyId::gamma: return rng.gamma(b[0], params.shared[0]);
        case FamilyId::lognormal: return rng.lognormal(b[0], std::sqrt(params.shared[0]));
      }
      throw domain_error("bad family");
    }
    case Kind::uniform: {
      const auto& lim = uniform_bounds[static_cast<size_t>(comp)];
      return rng.uniform_range(lim[0], lim[1]);
    }
    case Kind::t_shift:
      return t_shift[static_cast<size_t>(comp)] + rng.student_t(t_df);
  }
  throw domain_error("bad outcome law");
}

double OutcomeLaw::component_mean(Stratum u, int z) const {
  const int comp = component_of(u, z);
  switch (kind) {
    case Kind::exp_family: {
      const auto& f = get_family(family);
      const auto& b = family_block(params, comp);
      return f.mean(b.data(), params.shared.empty() ? nullptr : params.shared.data());
    }
    case Kind::uniform: {
      const auto& lim = uniform_bounds[static_cast<size_t>(comp)];
      return 0.5 * (lim[0] + lim[1]);
    }
    case Kind::t_shift:
      if (!(t_df > 1.0)) throw domain_error("t mean undefined for df <= 1");
      return t_shift[static_cast<size_t>(comp)];
  }
  throw domain_error("bad outcome law");
}

double OutcomeLaw::true_cace() const {
  return component_mean(Stratum::complier, 1) - component_mean(Stratum::complier, 0);
}

double MissingMechanism::response_prob(Stratum u, int d, double y) const {
  switch (kind) {
    case Kind::odn_step:
      if (y <= step_at) return p_low;
      if (y >= step_at_hi) return p_high;
      return p_mid;
    case Kind::li:
      if (u == Stratum::complier) return d == 1 ? gamma[0] : gamma[1];
      if (u == Stratum::never_taker) return gamma[2];
      return gamma[3];
    case Kind::dy:
      return 0.8 - (y > 5.0 ? 0.5 : 0.0) + (d == 1 ? 0.1 : 0.0) -
             (y > 5.0 && d == 0 ? 0.1 : 0.0);
    case Kind::dyu: {
      const double code = u == Stratum::complier ? 1.0 : (u == Stratum::never_taker ? 2.0 : 3.0);
      return 1.0 / (1.0 + std::exp(5.0 + 0.1 * static_cast<double>(d) - y - 0.1 * code));
    }
  }
  throw domain_error("bad missing mechanism");
}

void MissingMechanism::validate() const {
  switch (kind) {
    case Kind::odn_step:
      for (double p : {p_low, p_mid, p_high})
        if (!(p >= 0.0 && p <= 1.0))
          throw config_error("step response probabilities must lie in [0,1]");
      if (!(step_at < step_at_hi)) throw config_error("step thresholds out of order");
      break;
    case Kind::li:
      for (double g : gamma)
        if (!(g >= 0.0 && g <= 1.0))
          throw config_error("response probabilities gamma must lie in [0,1]");
      break;
    case Kind::dy:
    case Kind::dyu:
      break;  // closed forms are probabilities by construction
  }
}

void Scenario::validate() const {
  if (name.empty()) throw config_error("scenario needs a name");
  alpha.validate();
  mechanism.validate();
  true_cace();  // throws if the law is malformed
}

// ---- catalog ----

namespace {

FirstStageParams table_alpha() {
  FirstStageParams a;
  a.xi = 0.5;
  a.omega_a = 1.0 / 3.0;
  a.omega_n = 1.0 / 3.0;
  return a;
}

MissingMechanism table_rho() {
  MissingMechanism m;
  m.kind = MissingMechanism::Kind::odn_step;
  m.p_low = 0.85;
  m.p_mid = 0.9;
  m.p_high = 0.8;
  return m;
}

OutcomeParams normal_truth() {
  OutcomeParams p;
  p.block_1c = {5.0};
  p.block_0c = {4.0};
  p.block_a = {6.0};
  p.block_n = {3.0};
  p.shared = {1.0};
  return p;
}

Scenario normal_base(std::string name) {
  Scenario sc;
  sc.name = std::move(name);
  sc.alpha = table_alpha();
  sc.law.kind = OutcomeLaw::Kind::exp_family;
  sc.law.family = FamilyId::homo_normal;
  sc.law.params = normal_truth();
  sc.mechanism = table_rho();
  sc.fit_family = FamilyId::homo_normal;
  return sc;
}

Scenario li_scenario(std::string name, std::array<double, 4> gamma) {
  Scenario sc = normal_base(std::move(name));
  sc.mechanism = MissingMechanism{};
  sc.mechanism.kind = MissingMechanism::Kind::li;
  sc.mechanism.gamma = gamma;
  return sc;
}

std::vector<Scenario> build_catalog() {
  std::vector<Scenario> out;

  out.push_back(normal_base("homo_normal"));

  {
    Scenario sc;
    sc.name = "exponential";
    sc.alpha = table_alpha();
    sc.law.kind = OutcomeLaw::Kind::exp_family;
    sc.law.family = FamilyId::exponential;
    sc.law.params.block_1c = {1.0 / 5.0};
    sc.law.params.block_0c = {1.0 / 4.0};
    sc.law.params.block_a = {1.0 / 6.0};
    sc.law.params.block_n = {1.0 / 3.0};
    sc.mechanism = table_rho();
    sc.fit_family = FamilyId::exponential;
    out.push_back(sc);
  }
  {
    Scenario sc;
    sc.name = "gamma";
    sc.alpha = table_alpha();
    sc.law.kind = OutcomeLaw::Kind::exp_family;
    sc.law.family = FamilyId::gamma;
    sc.law.params.block_1c = {5.0};
    sc.law.params.block_0c = {4.0};
    sc.law.params.block_a = {6.0};
    sc.law.params.block_n = {3.0};
    sc.law.params.shared = {1.0};
    sc.mechanism = table_rho();
    sc.fit_family = FamilyId::gamma;
    out.push_back(sc);
  }
  {
    Scenario sc;
    sc.name = "lognormal";
    sc.alpha = table_alpha();
    sc.law.kind = OutcomeLaw::Kind::exp_family;
    sc.law.family = FamilyId::lognormal;
    sc.law.params.block_1c = {0.0};
    sc.law.params.block_0c = {-1.0};
    sc.law.params.block_a = {-1.5};
    sc.law.params.block_n = {-0.5};
    sc.law.params.shared = {1.0};
    sc.mechanism = table_rho();
    sc.fit_family = FamilyId::lognormal;
    out.push_back(sc);
  }
  {
    // Heteroskedastic violation: tighter complier-treated and always-taker
    // draws, everything else as in homo_normal.
    Scenario sc = normal_base("heter");
    sc.law.family = FamilyId::hetero_normal;
    sc.law.params.block_1c = {5.0, 0.25};
    sc.law.params.block_0c = {4.0, 1.0};
    sc.law.params.block_a = {6.0, 0.30};
    sc.law.params.block_n = {3.0, 1.0};
    sc.law.params.shared.clear();
    out.push_back(sc);
  }
  {
    Scenario sc = normal_base("unif");
    sc.law.kind = OutcomeLaw::Kind::uniform;
    sc.law.uniform_bounds = {{{2.0, 8.0}, {1.0, 7.0}, {3.0, 9.0}, {1.0, 5.0}}};
    out.push_back(sc);
  }
  {
    Scenario sc = normal_base("t");
    sc.law.kind = OutcomeLaw::Kind::t_shift;
    sc.law.t_df = 4.0;
    sc.law.t_shift = {5.0, 4.0, 6.0, 3.0};
    out.push_back(sc);
  }
  {
    Scenario sc = normal_base("dy");
    sc.mechanism = MissingMechanism{};
    sc.mechanism.kind = MissingMechanism::Kind::dy;
    out.push_back(sc);
  }
  {
    Scenario sc = normal_base("dyu");
    sc.mechanism = MissingMechanism{};
    sc.mechanism.kind = MissingMechanism::Kind::dyu;
    out.push_back(sc);
  }

  out.push_back(li_scenario("li1", {0.8, 0.75, 0.7, 0.9}));
  out.push_back(li_scenario("li2", {0.9, 0.7, 0.8, 0.7}));
  out.push_back(li_scenario("li3", {0.7, 0.6, 0.6, 0.8}));
  out.push_back(li_scenario("li4", {0.6, 0.7, 0.9, 0.7}));

  for (const auto& sc : out) sc.validate();
  return out;
}

}  // namespace

std::vector<Scenario> scenario_catalog() {
  static const std::vector<Scenario> catalog = build_catalog();
  return catalog;
}

const Scenario& find_scenario(std::string_view name) {
  static const std::vector<Scenario> catalog = build_catalog();
  for (const auto& sc : catalog)
    if (sc.name == name) return sc;
  std::string names;
  for (const auto& sc : catalog) names += (names.empty() ? "" : ", ") + sc.name;
  throw config_error("unknown scenario '" + std::string(name) + "' (known: " + names + ")");
}

Scenario odn_delta_scenario(double delta) {
  if (!(delta > 0.0 && delta <= 0.45))
    throw config_error("delta must lie in (0, 0.45] to keep response probabilities positive");
  Scenario sc = normal_base("odn_delta");
  sc.mechanism.p_low = 0.9 - delta;
  sc.mechanism.p_mid = 0.9;
  sc.mechanism.p_high = 0.9 - 2.0 * delta;
  sc.validate();
  return sc;
}

// ---- generation ----

GeneratedData generate(const Scenario& sc, long n, std::uint64_t seed) {
  if (n < 1) throw config_error("need n >= 1");
  sc.validate();

  GeneratedData out;
  out.records.resize(static_cast<size_t>(n));
  out.truth.resize(static_cast<size_t>(n));

  const double wc = sc.alpha.omega_c();
  const double wn = sc.alpha.omega_n;
  for (long i = 0; i < n; ++i) {
    RngStream rng = RngStream::keyed(seed, kRecordSalt, static_cast<std::uint64_t>(i));

    const int z = rng.bernoulli(sc.alpha.xi) ? 1 : 0;
    const double uv = rng.uniform();
    const Stratum u = uv < wc ? Stratum::complier
                              : (uv < wc + wn ? Stratum::never_taker : Stratum::always_taker);
    int d;
    switch (u) {
      case Stratum::complier: d = z; break;
      case Stratum::always_taker: d = 1; break;
      default: d = 0; break;
    }
    const double y = sc.law.draw(u, z, rng);
    const double p_resp = sc.mechanism.response_prob(u, d, y);
    if (!(p_resp >= 0.0 && p_resp <= 1.0))
      throw config_error("response probability left [0,1] at y = " + std::to_string(y));
    const bool responded = rng.bernoulli(p_resp);

    out.truth[static_cast<size_t>(i)] = {u, y};
    out.records[static_cast<size_t>(i)] =
        responded ? ObservedRecord::observed(z, d, y) : ObservedRecord::missing(z, d);
  }
  return out;
}

// ---- study driver ----

const char* method_name(Method m) { return m == Method::odn ? "ODN" : "LI"; }

Method parse_method(std::string_view name) {
  if (name == "ODN" || name == "odn") return Method::odn;
  if (name == "LI" || name == "li") return Method::li;
  throw config_error("unknown method '" + std::string(name) + "' (known: ODN, LI)");
}

StudyReport monte_carlo(const Scenario& sc, Method method, const StudyOptions& opts) {
  if (opts.reps < 1) throw config_error("need reps >= 1");
  sc.validate();
  const double truth = sc.true_cace();

  struct Slot {
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double lo = 0, hi = 0;
    bool ok = false;
  };
  std::vector<Slot> slots(static_cast<size_t>(opts.reps));

  parallel_for(opts.reps, opts.threads, [&](long rep) {
    const std::uint64_t rep_seed =
        RngStream::combine(RngStream::combine(opts.seed, kReplicateSalt),
                           static_cast<std::uint64_t>(rep));
    auto& slot = slots[static_cast<size_t>(rep)];
    try {
      const GeneratedData data = generate(sc, opts.n, rep_seed);

      BootstrapOptions boot;
      boot.replicates = opts.bootstrap_replicates;
      boot.seed = rep_seed;
      boot.threads = 1;

      if (method == Method::odn) {
        SecondStageOptions fit_opts;
        fit_opts.seed = rep_seed;
        const FitResult r = fit_cace_with_bootstrap(
            data.records, get_family(sc.fit_family), fit_opts, boot);
        slot.estimate = r.cace;
        slot.lo = r.bootstrap->ci95_lo;
        slot.hi = r.bootstrap->ci95_hi;
      } else {
        LiOptions li_opts;
        li_opts.seed = rep_seed;
        const LiFitResult r = li_fit_with_bootstrap(data.records, li_opts, boot);
        slot.estimate = r.fit.cace;
        slot.lo = r.bootstrap->ci95_lo;
        slot.hi = r.bootstrap->ci95_hi;
      }
      slot.ok = std::isfinite(slot.estimate);
    } catch (const std::runtime_error&) {
      slot.ok = false;
    }
  });

  StudyReport rep;
  rep.scenario = sc.name;
  rep.method = method;
  rep.n = opts.n;
  rep.truth = truth;
  rep.reps_requested = opts.reps;

  double sum = 0, lo_sum = 0, hi_sum = 0;
  long covered = 0;
  for (const auto& slot : slots) {
    if (!slot.ok) continue;
    ++rep.reps_used;
    sum += slot.estimate;
    lo_sum += slot.lo;
    hi_sum += slot.hi;
    if (slot.lo <= truth && truth <= slot.hi) ++covered;
  }
  rep.failures = rep.reps_requested - rep.reps_used;
  if (rep.reps_used == 0) {
    rep.mean_estimate = rep.bias = rep.std_dev = rep.cp95 =
        std::numeric_limits<double>::quiet_NaN();
    rep.ci95_lo_mean = rep.ci95_hi_mean = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }

  const double used = static_cast<double>(rep.reps_used);
  rep.mean_estimate = sum / used;
  rep.bias = rep.mean_estimate - truth;
  double ss = 0;
  for (const auto& slot : slots)
    if (slot.ok) ss += (slot.estimate - rep.mean_estimate) * (slot.estimate - rep.mean_estimate);
  rep.std_dev = rep.reps_used > 1 ? std::sqrt(ss / (used - 1.0))
                                  : std::numeric_limits<double>::quiet_NaN();
  rep.cp95 = static_cast<double>(covered) / used;
  rep.ci95_lo_mean = lo_sum / used;
  rep.ci95_hi_mean = hi_sum / used;
  return rep;
}

}  // namespace cace
