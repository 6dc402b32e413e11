#include "cace/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cace/errors.hpp"

namespace cace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sup_norm(const std::vector<double>& a) {
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// Counts evaluations and collapses non-finite values (objective or gradient)
// to +inf so the line search backs away from them.
struct Counted {
  const Objective& f;
  int evals = 0;

  double operator()(const std::vector<double>& x, std::vector<double>& grad) {
    ++evals;
    const double v = f(x, grad);
    if (!std::isfinite(v)) return kInf;
    for (double g : grad)
      if (!std::isfinite(g)) return kInf;
    return v;
  }
};

struct LinePoint {
  double a = 0, value = 0, slope = 0;
};

}  // namespace

OptimResult minimize_bfgs(const Objective& f, std::span<const double> x0,
                          const OptimOptions& opts) {
  const size_t n = x0.size();
  Counted prob{f};

  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> g(n), x_trial(n), g_trial(n), p(n), s(n), yv(n);
  std::vector<double> H(n * n, 0.0), Hy(n);
  for (size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
  bool seeded = false;
  if (!opts.init_hessian_inv.empty()) {
    if (opts.init_hessian_inv.size() != n * n)
      throw parameter_error("inverse-Hessian seed does not match the problem dimension");
    H = opts.init_hessian_inv;
    seeded = true;
  }

  double fx = prob(x, g);
  if (fx == kInf)
    throw numerical_error("objective is not finite at the optimizer starting point");

  const auto phi = [&](double a) -> LinePoint {
    for (size_t i = 0; i < n; ++i) x_trial[i] = x[i] + a * p[i];
    LinePoint pt;
    pt.a = a;
    pt.value = prob(x_trial, g_trial);
    pt.slope = pt.value == kInf ? kInf : dot(g_trial, p);
    return pt;
  };

  OptimResult res;
  bool scaled = seeded;  // a seeded model already carries the right scale
  bool just_reset = false;
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    res.grad_norm = sup_norm(g);
    if (res.grad_norm < opts.grad_tol) {
      res.converged = true;
      break;
    }

    bool steepest = false;
    for (size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (size_t j = 0; j < n; ++j) acc += H[i * n + j] * g[j];
      p[i] = -acc;
    }
    double dphi0 = dot(g, p);
    if (!(dphi0 < 0)) {  // lost descent; restart from the gradient
      std::fill(H.begin(), H.end(), 0.0);
      for (size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
      for (size_t i = 0; i < n; ++i) p[i] = -g[i];
      dphi0 = dot(g, p);
      steepest = true;
      scaled = false;
      if (!(dphi0 < 0)) break;  // gradient is numerically zero
    }

    // Strong-Wolfe line search: bracket then bisect.
    const double c1 = opts.wolfe_c1, c2 = opts.wolfe_c2;
    LinePoint lo{0.0, fx, dphi0}, hi{};
    LinePoint accepted{};
    bool have_accept = false, bracketed = false;
    LinePoint prev = lo;
    double a = 1.0;
    for (int ls = 0; ls < 30; ++ls) {
      LinePoint cur = phi(a);
      if (cur.value > fx + c1 * a * dphi0 || (ls > 0 && cur.value >= prev.value)) {
        lo = prev;
        hi = cur;
        bracketed = true;
        break;
      }
      if (std::abs(cur.slope) <= -c2 * dphi0) {
        accepted = cur;
        have_accept = true;
        break;
      }
      if (cur.slope >= 0) {
        lo = cur;
        hi = prev;
        bracketed = true;
        break;
      }
      prev = cur;
      a *= 2.0;
      if (a > 1e8) break;
    }
    if (bracketed && !have_accept) {
      for (int ls = 0; ls < 50; ++ls) {
        a = 0.5 * (lo.a + hi.a);
        LinePoint cur = phi(a);
        if (cur.value > fx + c1 * a * dphi0 || cur.value >= lo.value) {
          hi = cur;
        } else {
          if (std::abs(cur.slope) <= -c2 * dphi0) {
            accepted = cur;
            have_accept = true;
            break;
          }
          if (cur.slope * (hi.a - lo.a) >= 0) hi = lo;
          lo = cur;
        }
        if (std::abs(hi.a - lo.a) <= 1e-14 * std::max(1.0, std::abs(lo.a))) break;
      }
      // Wolfe could not be met exactly; settle for the best decrease found.
      if (!have_accept && lo.a > 0 && lo.value < fx) {
        accepted = phi(lo.a);
        have_accept = accepted.value < fx;
      }
    }
    if (!have_accept) {
      // A failed search along the gradient itself, or a second consecutive
      // failure after resetting the curvature model, means the objective is
      // flat to rounding noise here; more iterations cannot help.
      if (steepest || just_reset) break;
      std::fill(H.begin(), H.end(), 0.0);
      for (size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
      scaled = false;
      just_reset = true;
      continue;
    }
    just_reset = false;

    for (size_t i = 0; i < n; ++i) {
      s[i] = accepted.a * p[i];
      yv[i] = g_trial[i] - g[i];
    }
    const double sy = dot(s, yv);
    const double yy = dot(yv, yv);
    if (!scaled && sy > 0 && yy > 0) {
      const double scale = sy / yy;
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) H[i * n + j] = (i == j) ? scale : 0.0;
      scaled = true;
    }
    if (sy > 1e-10 * std::sqrt(dot(s, s) * yy)) {
      const double rho = 1.0 / sy;
      for (size_t i = 0; i < n; ++i) {
        double acc = 0;
        for (size_t j = 0; j < n; ++j) acc += H[i * n + j] * yv[j];
        Hy[i] = acc;
      }
      const double yHy = dot(yv, Hy);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          H[i * n + j] += -rho * (Hy[i] * s[j] + s[i] * Hy[j]) +
                          rho * rho * yHy * s[i] * s[j] + rho * s[i] * s[j];
    }

    x = x_trial;
    g = g_trial;
    fx = accepted.value;
  }

  res.x = std::move(x);
  res.value = fx;
  res.grad_norm = sup_norm(g);
  res.iterations = iter;
  res.evaluations = prob.evals;
  if (!res.converged) res.converged = res.grad_norm < opts.grad_tol;
  res.hessian_inv = std::move(H);
  return res;
}

}  // namespace cace
