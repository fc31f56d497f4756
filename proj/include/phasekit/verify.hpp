#pragma once

// Self-checks behind `phasekit verify`: each check compares a library result
// with an independent computation.

#include <ostream>
#include <string>
#include <vector>

namespace phasekit {

struct CheckResult {
    std::string name;
    bool passed;
    std::string detail;
};

std::vector<CheckResult> run_verification(bool fast);

}  // namespace phasekit
