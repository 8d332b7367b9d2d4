#pragma once

#include <chrono>
#include <string>

namespace hsmix::acceptance {

struct Result {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string hsmix;  // CLI executable
  int threads = 0;
};

extern Options opts;

std::string fmt(double x, int prec = 3);

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Result criterion_conservation();
Result criterion_reversal();
Result criterion_group_law();
Result criterion_scaling();
Result criterion_proximity();
Result criterion_equilibrium();
Result criterion_picard();
Result criterion_truncation();
Result criterion_chaos();
Result criterion_determinism();

}  // namespace hsmix::acceptance
