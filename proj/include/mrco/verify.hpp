#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mrco {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_err = 0.0;  // worst relative error (identities: absolute)
  double tolerance = 0.0;
  double seconds = 0.0;
  std::string note;  // extra context, e.g. parameter counts
};

/// Central finite differences against every analytic gradient: each primitive
/// operation and the composed losses, `trials` random draws per entry.
std::vector<CheckResult> gradient_suite(std::uint64_t seed,
                                        std::size_t trials = 100,
                                        double step = 1e-5,
                                        double tolerance = 1e-4);

/// Derivative of the held-out loss w.r.t. the reweighter, taken through the
/// virtual parameter step, against finite differences of the whole pipeline.
/// The probe model stays at or under 200 parameters.
CheckResult meta_gradient_check(std::uint64_t seed, double tolerance = 1e-3);

/// Closed-form invariants: no-negative queries cost exactly 0, an
/// equal-similarity pair costs ln 2, and the key-encoder momentum step is
/// bit-exact against its defining expression.
std::vector<CheckResult> identity_checks(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

/// "PASS name (max_err=... tol=... 0.12s)" one per line.
std::string format_results(const std::vector<CheckResult>& results);

}  // namespace mrco
