#include <doctest.h>

#include <set>
#include <string>

#include "mrco/verify.hpp"

using namespace mrco;

// full-depth runs live in the acceptance binary; these keep the wiring honest

TEST_CASE("gradient suite passes a shallow pass over every operation") {
  auto results = gradient_suite(123, 3);
  CHECK(results.size() >= 40);
  std::set<std::string> names;
  for (const CheckResult& r : results) {
    INFO(r.name << " max_err=" << r.max_err);
    CHECK(r.passed);
    CHECK(r.max_err <= r.tolerance);
    CHECK(names.insert(r.name).second);  // no duplicate entries
  }
  CHECK(names.count("matmul") == 1);
  CHECK(names.count("encoder_cnn") == 1);
  CHECK(names.count("task_loss") == 1);
  CHECK(names.count("contrastive_loss") == 1);
  CHECK(all_passed(results));

  std::string report = format_results(results);
  CHECK(report.find("PASS matmul") != std::string::npos);
  CHECK(report.find("FAIL") == std::string::npos);
}

TEST_CASE("meta gradient check stays within tolerance on a small model") {
  CheckResult r = meta_gradient_check(7);
  INFO(r.note << " max_err=" << r.max_err);
  CHECK(r.passed);
  CHECK(r.max_err <= 1e-3);
  CHECK(r.note.find("params") != std::string::npos);
}

TEST_CASE("closed-form identities hold") {
  auto results = identity_checks(11);
  REQUIRE(results.size() == 3);
  for (const CheckResult& r : results) {
    INFO(r.name << " max_err=" << r.max_err);
    CHECK(r.passed);
  }
  CHECK(results[0].max_err == 0.0);      // exact zero loss
  CHECK(results[1].max_err <= 1e-12);    // ln 2 identity
  CHECK(results[2].max_err == 0.0);      // momentum is bit-exact
}
