#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace acmix {

struct CheckResult {
  std::string group;     ///< property family, e.g. "conv-decomposition"
  std::string instance;  ///< sizes and settings of this case
  std::uint64_t seed = 0;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string note;
};

struct CheckReport {
  std::string command;
  std::vector<CheckResult> checks;

  bool all_passed() const {
    for (const CheckResult& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }

  std::size_t failures() const {
    std::size_t n = 0;
    for (const CheckResult& c : checks) n += c.passed ? 0 : 1;
    return n;
  }

  void add(std::string group, std::string instance, std::uint64_t seed, double deviation, double tolerance,
           std::string note = {}) {
    checks.push_back({std::move(group), std::move(instance), seed, deviation, tolerance, deviation <= tolerance,
                      std::move(note)});
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const CheckResult& c : checks) {
      nlohmann::json j = {{"group", c.group},         {"instance", c.instance}, {"seed", c.seed},
                          {"deviation", c.deviation}, {"tolerance", c.tolerance}, {"passed", c.passed}};
      if (!c.note.empty()) j["note"] = c.note;
      arr.push_back(j);
    }
    return {{"command", command}, {"passed", all_passed()}, {"failures", failures()}, {"checks", arr}};
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(3);
    for (const CheckResult& c : checks) {
      os << (c.passed ? "PASS " : "FAIL ") << c.group << " [" << c.instance << "] seed=" << c.seed
         << " dev=" << std::scientific << c.deviation << " tol=" << c.tolerance << std::defaultfloat;
      if (!c.note.empty()) os << " (" << c.note << ")";
      os << "\n";
    }
    os << command << ": " << (checks.size() - failures()) << "/" << checks.size() << " passed\n";
    return os.str();
  }
};

}  // namespace acmix
