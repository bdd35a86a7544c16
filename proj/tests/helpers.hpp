#pragma once

#include <memory>
#include <string>

#include "certed/grid.hpp"

namespace certed::testing {

#ifndef CERTED_DATA_DIR
#define CERTED_DATA_DIR "data"
#endif

inline std::string toy14_path() {
  return std::string(CERTED_DATA_DIR) + "/toy14.json";
}

// gen1 (c=1, [0,10]) @ bus 1, gen2 (c=2, [0,10]) @ bus 2, branch 1->2 with
// x=1 and limits +-6, load 15 @ bus 2. The cheap generator is limited by the
// line: optimum is pg=(6,9), objective 24, branch congested.
inline std::shared_ptr<const System> two_bus_congested() {
  return System::build(parse_case_string(R"({
    "buses": ["1", "2"],
    "branches": [{"from": "1", "to": "2", "x": 1.0,
                  "f_lower": -6.0, "f_upper": 6.0}],
    "generators": [
      {"bus": "1", "cost": 1.0, "p_lower": 0.0, "p_upper": 10.0},
      {"bus": "2", "cost": 2.0, "p_lower": 0.0, "p_upper": 10.0}
    ],
    "loads": [{"bus": "2", "demand": 15.0}],
    "slack": "1",
    "penalty_M": 150000.0
  })"));
}

// One generator (c=10, [0,10]) and one load, both at the slack bus; the wide
// line to bus 2 never binds. Optimum: pg = pd, lambda = 10.
inline std::shared_ptr<const System> two_bus_uncongested() {
  return System::build(parse_case_string(R"({
    "buses": ["1", "2"],
    "branches": [{"from": "1", "to": "2", "x": 1.0,
                  "f_lower": -100.0, "f_upper": 100.0}],
    "generators": [
      {"bus": "1", "cost": 10.0, "p_lower": 0.0, "p_upper": 10.0}
    ],
    "loads": [{"bus": "1", "demand": 5.0}],
    "slack": "1",
    "penalty_M": 150000.0
  })"));
}

// Single generator at bus 1 feeding a load at bus 2 over a 6 MW line; any
// demand above 6 forces overflow (xi > 0).
inline std::shared_ptr<const System> two_bus_overflow() {
  return System::build(parse_case_string(R"({
    "buses": ["1", "2"],
    "branches": [{"from": "1", "to": "2", "x": 1.0,
                  "f_lower": -6.0, "f_upper": 6.0}],
    "generators": [
      {"bus": "1", "cost": 5.0, "p_lower": 0.0, "p_upper": 20.0}
    ],
    "loads": [{"bus": "2", "demand": 10.0}],
    "slack": "1",
    "penalty_M": 150000.0
  })"));
}

// Flow bounds of +-1 give an S3L smoothing ratio s = mu_s / 2.
inline std::shared_ptr<const System> two_bus_unit_range() {
  return System::build(parse_case_string(R"({
    "buses": ["1", "2"],
    "branches": [{"from": "1", "to": "2", "x": 1.0,
                  "f_lower": -1.0, "f_upper": 1.0}],
    "generators": [
      {"bus": "1", "cost": 1.0, "p_lower": 0.0, "p_upper": 10.0},
      {"bus": "2", "cost": 2.0, "p_lower": 0.0, "p_upper": 10.0}
    ],
    "loads": [{"bus": "2", "demand": 0.5}],
    "slack": "1",
    "penalty_M": 150000.0
  })"));
}

inline std::shared_ptr<const System> toy14() {
  static std::shared_ptr<const System> sys = load_system(toy14_path());
  return sys;
}

}  // namespace certed::testing
