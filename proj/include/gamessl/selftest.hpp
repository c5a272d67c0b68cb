#pragma once

#include <string>
#include <vector>

namespace gamessl::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  // Deliberately breaks one check so the harness itself can be validated.
  // Known value: "nt_xent".
  std::string inject_fault;
};

// Gradient checks for every differentiable op, loss oracles, Sinkhorn
// invariants and least-squares oracles. Pure; a few seconds of CPU.
std::vector<Check> run(const Options& options = {});

}  // namespace gamessl::selftest
