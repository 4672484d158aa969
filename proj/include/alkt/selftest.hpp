// SPDX-License-Identifier: Apache-2.0
//
// Fast invariant suite behind `alkt selftest`.

#ifndef ALKT_SELFTEST_HPP
#define ALKT_SELFTEST_HPP

#include <string>
#include <vector>

#include "alkt/uncertainty.hpp"

namespace alkt {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  /// Floor handed to the KL oracle checks. Changing it is the mutation hook
  /// that proves those checks can fail.
  double kl_eps = kKlEps;
};

std::vector<SelfCheck> run_selftest(const SelftestOptions& options = {});

}  // namespace alkt

#endif  // ALKT_SELFTEST_HPP
