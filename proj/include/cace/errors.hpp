#pragma once

#include <stdexcept>
#include <string>

namespace cace {

// Error taxonomy. The CLI maps these onto process exit codes:
//   config/format misuse -> 2, statistical insufficiency -> 3,
//   numerical failure -> 4.

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct data_format_error : std::runtime_error {
  long line = 0;
  data_format_error(const std::string& msg, long line_no)
      : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"),
        line(line_no) {}
  explicit data_format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Parameter outside its admissible space, or y outside the family support.
struct parameter_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct unsupported_family_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data cannot support the requested fit at all (empty arm, no observed
// outcomes in a populated cell, ...).
struct insufficient_data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// First-stage compliance margins give omega_c <= 0.
struct weak_instrument_error : insufficient_data_error {
  using insufficient_data_error::insufficient_data_error;
};

struct no_information_error : insufficient_data_error {
  using insufficient_data_error::insufficient_data_error;
};

// All cell masses vanished at one observation point.
struct degenerate_point_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct singularity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct inconsistent_coefficients_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct non_convergence_error : numerical_error {
  using numerical_error::numerical_error;
};

struct boundary_error : numerical_error {
  using numerical_error::numerical_error;
};

struct unstable_fit_error : numerical_error {
  using numerical_error::numerical_error;
};

// Something that must hold by construction failed (e.g. EM decreased the
// observed-data likelihood).
struct implementation_fault : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace cace
