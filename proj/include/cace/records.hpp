#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cace/errors.hpp"

namespace cace {

// One subject: randomized assignment z, treatment received d, response
// indicator r, and the outcome y which is meaningful iff r == 1.
struct ObservedRecord {
  std::uint8_t z = 0;
  std::uint8_t d = 0;
  std::uint8_t r = 0;
  double y = 0.0;

  static ObservedRecord observed(int z, int d, double y) {
    return ObservedRecord{static_cast<std::uint8_t>(z), static_cast<std::uint8_t>(d), 1, y};
  }
  static ObservedRecord missing(int z, int d) {
    return ObservedRecord{static_cast<std::uint8_t>(z), static_cast<std::uint8_t>(d), 0, 0.0};
  }
};

inline void validate_record(const ObservedRecord& rec) {
  if (rec.z > 1 || rec.d > 1 || rec.r > 1)
    throw data_format_error("z, d, r must be 0 or 1");
}

// Compliance stratum under monotonicity; the defier pattern D(1)=0, D(0)=1 is
// excluded by construction.
enum class Stratum { complier, always_taker, never_taker };

inline Stratum stratum_from_potential(int d1, int d0) {
  if (d1 == 1 && d0 == 0) return Stratum::complier;
  if (d1 == 1 && d0 == 1) return Stratum::always_taker;
  if (d1 == 0 && d0 == 0) return Stratum::never_taker;
  throw domain_error("defier pattern (D(1)=0, D(0)=1) is excluded by monotonicity");
}

inline const char* stratum_name(Stratum u) {
  switch (u) {
    case Stratum::complier: return "complier";
    case Stratum::always_taker: return "always-taker";
    case Stratum::never_taker: return "never-taker";
  }
  return "?";
}

// Design and compliance margins: assignment probability xi and the
// always/never-taker proportions. omega_c = 1 - omega_a - omega_n must stay
// strictly positive.
struct FirstStageParams {
  double xi = 0.5;
  double omega_a = 0.0;
  double omega_n = 0.0;

  double omega_c() const { return 1.0 - omega_a - omega_n; }

  void validate() const {
    if (!(xi > 0.0 && xi < 1.0))
      throw parameter_error("xi must lie in (0,1)");
    if (!(omega_a >= 0.0 && omega_a < 1.0) || !(omega_n >= 0.0 && omega_n < 1.0))
      throw parameter_error("omega_a and omega_n must lie in [0,1)");
    if (!(omega_a + omega_n < 1.0))
      throw weak_instrument_error("omega_a + omega_n must be < 1 (complier proportion must be positive)");
  }
};

// Cell and missingness counts of a dataset.
struct CountSummary {
  long n_total = 0;
  long n1 = 0, n0 = 0;     // arm sizes
  long n[2][2] = {{0, 0}, {0, 0}};  // n[z][d], missing included
  long m[2][2] = {{0, 0}, {0, 0}};  // m[z][d] = records with r == 0

  static CountSummary from_records(std::span<const ObservedRecord> records) {
    CountSummary s;
    for (const auto& rec : records) {
      validate_record(rec);
      ++s.n_total;
      (rec.z ? s.n1 : s.n0)++;
      ++s.n[rec.z][rec.d];
      if (!rec.r) ++s.m[rec.z][rec.d];
    }
    return s;
  }

  long observed(int z, int d) const { return n[z][d] - m[z][d]; }
  long total_missing() const { return m[0][0] + m[0][1] + m[1][0] + m[1][1]; }
};

}  // namespace cace
