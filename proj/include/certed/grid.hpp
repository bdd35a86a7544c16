#pragma once

#include <memory>
#include <string>
#include <vector>

#include "certed/common.hpp"

namespace certed {

struct Branch {
  int from = -1;  // bus index
  int to = -1;
  double x = 0.0;  // reactance, p.u.
  double f_lower = -kInf;
  double f_upper = kInf;
};

struct Generator {
  int bus = -1;
  double cost = 0.0;  // $/MWh
  double p_lower = 0.0;
  double p_upper = 0.0;
};

struct Load {
  int bus = -1;
  double demand = 0.0;  // reference demand, MW
};

// Static network description. Immutable after construction/validation.
struct Grid {
  std::vector<std::string> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  int slack = -1;
  double penalty_M = 150000.0;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  int n_generators() const { return static_cast<int>(generators.size()); }
  int n_loads() const { return static_cast<int>(loads.size()); }

  int bus_index(const std::string& name) const;

  // Checks all structural invariants (self-loops, bound ordering,
  // connectivity, slack validity, penalty dominance). Throws InvariantError.
  void validate() const;
};

// PTDF matrix and incidence matrices derived from a Grid.
struct PTDFModel {
  Mat phi;  // E x N, slack column identically zero
  Mat a_g;  // N x G, one 1 per column
  Mat a_d;  // N x D, one 1 per column
};

Grid parse_case(const std::string& path);
Grid parse_case_string(const std::string& text);
std::string serialize_case(const Grid& grid);

PTDFModel compute_ptdf(const Grid& grid);

// Grid + PTDF + the cached vectors/matrices that define the ED constraint
// data. Built once, shared read-only across instances and solves.
struct System {
  Grid grid;
  PTDFModel ptdf;
  Vec cost;      // G
  Vec pg_lower;  // G
  Vec pg_upper;  // G
  Vec f_lower;   // E
  Vec f_upper;   // E
  Vec pd_ref;    // D, reference demands
  Mat phi_ag;    // E x G, Phi * A_g
  Mat phi_ad;    // E x D, Phi * A_d
  double penalty = 150000.0;

  int n_gen() const { return static_cast<int>(cost.size()); }
  int n_branch() const { return static_cast<int>(f_lower.size()); }
  int n_load() const { return static_cast<int>(pd_ref.size()); }

  static std::shared_ptr<const System> build(Grid grid);
};

std::shared_ptr<const System> load_system(const std::string& path);

}  // namespace certed
