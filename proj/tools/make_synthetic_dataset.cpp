// Builds the synthetic trial dataset shipped under data/. The (z,d) cell
// totals are fixed (a two-arm encouragement design with 421 subjects), the
// outcomes are drawn from stratum-specific normal laws on a symptom-score
// scale, and follow-up is blanked through an outcome-dependent step in y:
// the sicker the score, the likelier the missing outcome. The same step
// applies to every subject, so the per-cell missing rates differ only
// through the stratum outcome laws.
//
// The output is a synthetic stand-in with the structure of a real trial, not
// a reconstruction of any real data.

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "cace/csv.hpp"
#include "cace/records.hpp"
#include "cace/rng.hpp"

namespace {

struct CellSpec {
  int z, d;
  long total;
  // mixture over strata feeding this cell: indices into kMu, weights
  std::array<int, 2> comp;
  std::array<double, 2> weight;
  int n_comp;
};

// stratum means on the symptom scale: 1c, 0c, a, n (lower is better)
constexpr double kMu[4] = {68.0, 76.0, 64.0, 86.0};
constexpr double kSigma = 15.0;

// response probability as a step in the outcome
double rho(double y) {
  if (y <= 60.0) return 0.95;
  if (y >= 90.0) return 0.55;
  return 0.85;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out = argc > 1 ? argv[1] : "data/synthetic_trial.csv";
  const std::uint64_t seed = 20260801;

  // two-arm design, one-third compliers/always/never within each arm
  const double wc = 1.0 / 3.0, wa = 1.0 / 3.0, wn = 1.0 / 3.0;
  const std::vector<CellSpec> cells = {
      {1, 1, 122, {0, 2}, {wc, wa}, 2},   // assigned+treated: compliers and always-takers
      {1, 0, 81, {3, -1}, {wn, 0}, 1},    // assigned, untreated: never-takers
      {0, 1, 57, {2, -1}, {wa, 0}, 1},    // control, treated: always-takers
      {0, 0, 161, {1, 3}, {wc, wn}, 2},   // control, untreated: compliers and never-takers
  };

  std::vector<cace::ObservedRecord> records;
  records.reserve(421);
  cace::RngStream rng(seed);
  for (const auto& cell : cells) {
    for (long i = 0; i < cell.total; ++i) {
      int comp = cell.comp[0];
      if (cell.n_comp == 2) {
        const double p0 = cell.weight[0] / (cell.weight[0] + cell.weight[1]);
        comp = rng.bernoulli(p0) ? cell.comp[0] : cell.comp[1];
      }
      const double y = rng.normal(kMu[comp], kSigma);
      if (rng.bernoulli(rho(y)))
        records.push_back(cace::ObservedRecord::observed(cell.z, cell.d, y));
      else
        records.push_back(cace::ObservedRecord::missing(cell.z, cell.d));
    }
  }

  // interleave the cells deterministically so the file is not sorted by cell
  std::vector<cace::ObservedRecord> shuffled = records;
  for (size_t i = shuffled.size(); i > 1; --i) {
    const size_t j = rng.uniform_int(static_cast<std::uint64_t>(i));
    std::swap(shuffled[i - 1], shuffled[j]);
  }

  cace::write_records_csv_file(out, shuffled);
  std::printf("wrote %zu records to %s\n", shuffled.size(), out.c_str());
  return 0;
}
