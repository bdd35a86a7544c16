#include "certed/grid.hpp"

#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace certed {

using nlohmann::json;

int Grid::bus_index(const std::string& name) const {
  for (int i = 0; i < n_buses(); ++i)
    if (buses[i] == name) return i;
  return -1;
}

void Grid::validate() const {
  const int n = n_buses();
  if (n == 0) throw InvariantError("grid has no buses");
  if (slack < 0 || slack >= n)
    throw InvariantError("slack is not a valid bus");
  if (generators.empty()) throw InvariantError("grid has no generators");

  for (int e = 0; e < n_branches(); ++e) {
    const Branch& br = branches[e];
    std::string where = "branches[" + std::to_string(e) + "]";
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n)
      throw InvariantError(where + ": endpoint is not a valid bus");
    if (br.from == br.to) throw InvariantError(where + ": self-loop branch");
    if (br.x == 0.0) throw InvariantError(where + ": zero reactance");
    if (br.f_lower > br.f_upper)
      throw InvariantError(where + ": inverted flow bounds");
  }
  double max_cost = -kInf;
  for (int g = 0; g < n_generators(); ++g) {
    const Generator& gen = generators[g];
    std::string where = "generators[" + std::to_string(g) + "]";
    if (gen.bus < 0 || gen.bus >= n)
      throw InvariantError(where + ": not attached to a valid bus");
    if (gen.p_lower > gen.p_upper)
      throw InvariantError(where + ": inverted generator bounds");
    max_cost = std::max(max_cost, gen.cost);
  }
  for (int d = 0; d < n_loads(); ++d) {
    const Load& ld = loads[d];
    if (ld.bus < 0 || ld.bus >= n)
      throw InvariantError("loads[" + std::to_string(d) +
                           "]: not attached to a valid bus");
  }
  if (!(penalty_M > 0) || penalty_M <= max_cost)
    throw InvariantError("penalty_M must exceed the largest cost coefficient");

  // Connectivity (BFS over the branch graph).
  std::vector<std::vector<int>> adj(n);
  for (const Branch& br : branches) {
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(slack);
  seen[slack] = 1;
  int reached = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
  }
  if (reached != n) throw InvariantError("network graph is not connected");
}

namespace {

double require_number(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key))
    throw ParseError(path + ": missing required field '" + key + "'");
  if (!obj[key].is_number())
    throw ParseError(path + "." + key + ": expected a number");
  return obj[key].get<double>();
}

std::string require_string(const json& obj, const char* key,
                           const std::string& path) {
  if (!obj.contains(key))
    throw ParseError(path + ": missing required field '" + key + "'");
  const json& v = obj[key];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ParseError(path + "." + key + ": expected a bus identifier");
}

Grid grid_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("case file: top level must be an object");
  for (const char* key : {"buses", "branches", "generators", "loads", "slack"})
    if (!doc.contains(key))
      throw ParseError(std::string("case file: missing required field '") +
                       key + "'");

  Grid grid;
  std::unordered_map<std::string, int> index;
  for (const json& b : doc["buses"]) {
    std::string name =
        b.is_string() ? b.get<std::string>() : std::to_string(b.get<long long>());
    if (index.count(name)) throw ParseError("buses: duplicate bus '" + name + "'");
    index[name] = static_cast<int>(grid.buses.size());
    grid.buses.push_back(name);
  }
  auto resolve = [&](const std::string& name, const std::string& path) {
    auto it = index.find(name);
    if (it == index.end())
      throw ParseError(path + ": unknown bus '" + name + "'");
    return it->second;
  };

  int e = 0;
  for (const json& b : doc["branches"]) {
    std::string path = "branches[" + std::to_string(e++) + "]";
    Branch br;
    br.from = resolve(require_string(b, "from", path), path);
    br.to = resolve(require_string(b, "to", path), path);
    br.x = require_number(b, "x", path);
    br.f_lower = require_number(b, "f_lower", path);
    br.f_upper = require_number(b, "f_upper", path);
    grid.branches.push_back(br);
  }
  int g = 0;
  for (const json& b : doc["generators"]) {
    std::string path = "generators[" + std::to_string(g++) + "]";
    Generator gen;
    gen.bus = resolve(require_string(b, "bus", path), path);
    gen.cost = require_number(b, "cost", path);
    gen.p_lower = require_number(b, "p_lower", path);
    gen.p_upper = require_number(b, "p_upper", path);
    grid.generators.push_back(gen);
  }
  int d = 0;
  for (const json& b : doc["loads"]) {
    std::string path = "loads[" + std::to_string(d++) + "]";
    Load ld;
    ld.bus = resolve(require_string(b, "bus", path), path);
    ld.demand = require_number(b, "demand", path);
    grid.loads.push_back(ld);
  }
  grid.slack = resolve(doc["slack"].is_string()
                           ? doc["slack"].get<std::string>()
                           : std::to_string(doc["slack"].get<long long>()),
                       "slack");
  if (doc.contains("penalty_M")) grid.penalty_M = doc["penalty_M"].get<double>();

  grid.validate();
  return grid;
}

}  // namespace

Grid parse_case_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& ex) {
    throw ParseError(std::string("case file: malformed syntax: ") + ex.what());
  }
  return grid_from_json(doc);
}

Grid parse_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_case_string(buf.str());
}

std::string serialize_case(const Grid& grid) {
  json doc;
  doc["buses"] = grid.buses;
  doc["branches"] = json::array();
  for (const Branch& br : grid.branches)
    doc["branches"].push_back({{"from", grid.buses[br.from]},
                               {"to", grid.buses[br.to]},
                               {"x", br.x},
                               {"f_lower", br.f_lower},
                               {"f_upper", br.f_upper}});
  doc["generators"] = json::array();
  for (const Generator& gen : grid.generators)
    doc["generators"].push_back({{"bus", grid.buses[gen.bus]},
                                 {"cost", gen.cost},
                                 {"p_lower", gen.p_lower},
                                 {"p_upper", gen.p_upper}});
  doc["loads"] = json::array();
  for (const Load& ld : grid.loads)
    doc["loads"].push_back({{"bus", grid.buses[ld.bus]}, {"demand", ld.demand}});
  doc["slack"] = grid.buses[grid.slack];
  doc["penalty_M"] = grid.penalty_M;
  return doc.dump(2);
}

PTDFModel compute_ptdf(const Grid& grid) {
  const int n = grid.n_buses();
  const int e = grid.n_branches();

  // Bus susceptance matrix from branch reactances (b = 1/x).
  Mat bus_b = Mat::Zero(n, n);
  for (const Branch& br : grid.branches) {
    const double b = 1.0 / br.x;
    bus_b(br.from, br.from) += b;
    bus_b(br.to, br.to) += b;
    bus_b(br.from, br.to) -= b;
    bus_b(br.to, br.from) -= b;
  }

  // Delete slack row/column, factorize once.
  std::vector<int> keep;
  keep.reserve(n - 1);
  for (int i = 0; i < n; ++i)
    if (i != grid.slack) keep.push_back(i);
  Mat reduced(n - 1, n - 1);
  for (int i = 0; i < n - 1; ++i)
    for (int j = 0; j < n - 1; ++j) reduced(i, j) = bus_b(keep[i], keep[j]);

  Eigen::FullPivLU<Mat> lu(reduced);
  if (!lu.isInvertible())
    throw NumericError("singular reduced susceptance matrix (disconnected network)");

  // One right-hand side per branch: row e of Phi is (1/x_e)(e_from - e_to)^T
  // restricted to non-slack buses, solved against the reduced matrix.
  Mat rhs = Mat::Zero(n - 1, e);
  for (int k = 0; k < e; ++k) {
    const Branch& br = grid.branches[k];
    const double b = 1.0 / br.x;
    for (int i = 0; i < n - 1; ++i) {
      if (keep[i] == br.from) rhs(i, k) += b;
      if (keep[i] == br.to) rhs(i, k) -= b;
    }
  }
  Mat sol = lu.solve(rhs);  // (n-1) x e

  PTDFModel model;
  model.phi = Mat::Zero(e, n);
  for (int i = 0; i < n - 1; ++i) model.phi.col(keep[i]) = sol.row(i).transpose();

  model.a_g = Mat::Zero(n, grid.n_generators());
  for (int g = 0; g < grid.n_generators(); ++g)
    model.a_g(grid.generators[g].bus, g) = 1.0;
  model.a_d = Mat::Zero(n, grid.n_loads());
  for (int d = 0; d < grid.n_loads(); ++d) model.a_d(grid.loads[d].bus, d) = 1.0;
  return model;
}

std::shared_ptr<const System> System::build(Grid grid) {
  grid.validate();
  auto sys = std::make_shared<System>();
  sys->ptdf = compute_ptdf(grid);
  const int ng = grid.n_generators();
  const int ne = grid.n_branches();
  const int nd = grid.n_loads();
  sys->cost.resize(ng);
  sys->pg_lower.resize(ng);
  sys->pg_upper.resize(ng);
  for (int g = 0; g < ng; ++g) {
    sys->cost[g] = grid.generators[g].cost;
    sys->pg_lower[g] = grid.generators[g].p_lower;
    sys->pg_upper[g] = grid.generators[g].p_upper;
  }
  sys->f_lower.resize(ne);
  sys->f_upper.resize(ne);
  for (int e = 0; e < ne; ++e) {
    sys->f_lower[e] = grid.branches[e].f_lower;
    sys->f_upper[e] = grid.branches[e].f_upper;
  }
  sys->pd_ref.resize(nd);
  for (int d = 0; d < nd; ++d) sys->pd_ref[d] = grid.loads[d].demand;
  sys->phi_ag = sys->ptdf.phi * sys->ptdf.a_g;
  sys->phi_ad = sys->ptdf.phi * sys->ptdf.a_d;
  sys->penalty = grid.penalty_M;
  sys->grid = std::move(grid);
  return sys;
}

std::shared_ptr<const System> load_system(const std::string& path) {
  return System::build(parse_case(path));
}

}  // namespace certed
