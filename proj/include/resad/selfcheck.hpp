#pragma once

#include <string>
#include <vector>

namespace resad {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Soap-bubble bound plus a quick suite of gradient, flow and metric
// invariants. Runs in a few seconds.
std::vector<CheckResult> run_selfcheck();

}  // namespace resad
