#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>
#include <json.hpp>

#include "drbse/errors.hpp"

namespace drbse {

using json = nlohmann::json;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Bus {
  int id = 0;
  double g_sh = 0.0;  // aggregated bus shunt conductance (p.u.)
  double b_sh = 0.0;  // aggregated bus shunt susceptance, incl. line charging halves
  bool is_zero_injection = false;
  double v_true = 1.0;       // solved magnitude (p.u.)
  double theta_true = 0.0;   // solved angle (rad), relative to the reference bus
};

struct Branch {
  int from = 0;
  int to = 0;
  double g = 0.0;    // series conductance (p.u.)
  double b = 0.0;    // series susceptance (p.u.)
  double tap = 1.0;  // off-nominal turns ratio at the from side, 1.0 = nominal
};

class NetworkCase {
 public:
  double base_mva = 100.0;
  int reference_bus = 0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::map<int, int> areas;  // optional bus -> area hints from the case file

  int bus_pos(int id) const {
    auto it = pos_.find(id);
    if (it == pos_.end()) throw ValidationError("unknown bus id " + std::to_string(id));
    return it->second;
  }
  bool has_bus(int id) const { return pos_.count(id) != 0; }
  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }

  const std::vector<int>& branches_at(int bus_id) const {
    static const std::vector<int> kEmpty;
    auto it = incident_.find(bus_id);
    return it == incident_.end() ? kEmpty : it->second;
  }

  // Index maps and invariants; call after filling the public fields.
  void finalize() {
    pos_.clear();
    incident_.clear();
    for (int k = 0; k < n_buses(); ++k) {
      const Bus& b = buses[k];
      if (!pos_.emplace(b.id, k).second)
        throw ValidationError("duplicate bus id " + std::to_string(b.id));
      if (b.v_true <= 0.0)
        throw ValidationError("bus " + std::to_string(b.id) + " has non-positive v_true");
    }
    if (!has_bus(reference_bus))
      throw ValidationError("reference bus " + std::to_string(reference_bus) + " not in case");
    for (int e = 0; e < n_branches(); ++e) {
      const Branch& br = branches[e];
      if (br.from == br.to)
        throw ValidationError("branch " + std::to_string(e) + " is a self-loop");
      if (br.g == 0.0 && br.b == 0.0)
        throw ValidationError("branch " + std::to_string(e) + " has zero admittance");
      if (br.tap <= 0.0)
        throw ValidationError("branch " + std::to_string(e) + " has non-positive tap");
      if (!has_bus(br.from) || !has_bus(br.to))
        throw ValidationError("branch " + std::to_string(e) + " endpoint does not resolve");
      incident_[br.from].push_back(e);
      incident_[br.to].push_back(e);
    }
    if (!connected())
      throw ValidationError("network is not connected");
  }

 private:
  bool connected() const {
    if (buses.empty()) return false;
    std::set<int> seen;
    std::vector<int> stack{buses.front().id};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      if (!seen.insert(u).second) continue;
      for (int e : branches_at(u)) {
        const Branch& br = branches[e];
        stack.push_back(br.from == u ? br.to : br.from);
      }
    }
    return seen.size() == buses.size();
  }

  std::unordered_map<int, int> pos_;
  std::unordered_map<int, std::vector<int>> incident_;
};

// A branch with a layout-level orientation. `l_sign` is +1 when (from,to)
// matches the case file orientation and -1 when flipped; K is symmetric under
// the swap while L changes sign, so the sign travels with every L coefficient.
struct OrientedBranch {
  int branch = -1;
  int from = 0;
  int to = 0;
  double l_sign = 1.0;
};

struct AreaPartition {
  std::map<int, int> assignment;  // bus id -> area in 1..area_count
  int area_count = 0;

  int area_of(int bus) const {
    auto it = assignment.find(bus);
    if (it == assignment.end())
      throw ValidationError("bus " + std::to_string(bus) + " has no area assignment");
    return it->second;
  }
};

struct AreaView {
  int area = 0;
  std::vector<int> buses;                        // N_a, sorted
  std::vector<int> internal_branches;            // E_a, branch indices
  std::map<int, std::vector<int>> tie_lines;     // Gamma_{a,b}: neighbor -> branch indices
  std::map<int, std::vector<int>> owned_ties;    // Gamma_hat_{a,b}, nonempty only for a < b
  std::vector<int> neighbors;                    // Delta_a
  std::vector<int> boundary_copies;              // N_hat_a^BB: far-end buses of incident ties

  bool has_bus(int id) const { return std::binary_search(buses.begin(), buses.end(), id); }

  std::vector<int> incident_tie_branches() const {
    std::vector<int> out;
    for (const auto& [b, ties] : tie_lines) out.insert(out.end(), ties.begin(), ties.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<int> owned_branches() const {
    std::vector<int> out = internal_branches;
    for (const auto& [b, ties] : owned_ties) out.insert(out.end(), ties.begin(), ties.end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

// Tie-lines are oriented with the lower-indexed area's endpoint first so the
// two copies of (K, L) refer to the same oriented quantity; internal branches
// keep the case orientation.
inline OrientedBranch orient_branch(const NetworkCase& net, const AreaPartition& part, int e) {
  const Branch& br = net.branches[e];
  int af = part.area_of(br.from), at = part.area_of(br.to);
  if (af <= at) return {e, br.from, br.to, +1.0};
  return {e, br.to, br.from, -1.0};
}

inline OrientedBranch orient_case(const NetworkCase& net, int e) {
  const Branch& br = net.branches[e];
  return {e, br.from, br.to, +1.0};
}

inline std::vector<AreaView> build_partition(const NetworkCase& net, const AreaPartition& part) {
  if (part.area_count < 1) throw ValidationError("partition has no areas");
  for (const Bus& b : net.buses) part.area_of(b.id);  // every bus assigned

  std::vector<AreaView> views(part.area_count);
  for (int a = 0; a < part.area_count; ++a) views[a].area = a + 1;
  for (const Bus& b : net.buses) {
    int a = part.area_of(b.id);
    if (a < 1 || a > part.area_count)
      throw ValidationError("bus " + std::to_string(b.id) + " assigned to area " +
                            std::to_string(a) + " out of range");
    views[a - 1].buses.push_back(b.id);
  }
  for (AreaView& v : views) {
    if (v.buses.empty())
      throw ValidationError("area " + std::to_string(v.area) + " has no buses");
    std::sort(v.buses.begin(), v.buses.end());
  }

  for (int e = 0; e < net.n_branches(); ++e) {
    const Branch& br = net.branches[e];
    int af = part.area_of(br.from), at = part.area_of(br.to);
    if (af == at) {
      views[af - 1].internal_branches.push_back(e);
    } else {
      views[af - 1].tie_lines[at].push_back(e);
      views[at - 1].tie_lines[af].push_back(e);
      int lo = std::min(af, at), hi = std::max(af, at);
      views[lo - 1].owned_ties[hi].push_back(e);
      // each area holds a state copy of the endpoint it does not own
      views[af - 1].boundary_copies.push_back(br.to);
      views[at - 1].boundary_copies.push_back(br.from);
    }
  }

  for (AreaView& v : views) {
    for (auto& [b, ties] : v.tie_lines) v.neighbors.push_back(b);
    std::sort(v.neighbors.begin(), v.neighbors.end());
    std::sort(v.boundary_copies.begin(), v.boundary_copies.end());
    v.boundary_copies.erase(std::unique(v.boundary_copies.begin(), v.boundary_copies.end()),
                            v.boundary_copies.end());
    // internal graph plus incident tie-lines must be connected
    std::set<int> nodes(v.buses.begin(), v.buses.end());
    nodes.insert(v.boundary_copies.begin(), v.boundary_copies.end());
    std::map<int, std::vector<int>> adj;
    auto add_edge = [&](int e) {
      const Branch& br = net.branches[e];
      adj[br.from].push_back(br.to);
      adj[br.to].push_back(br.from);
    };
    for (int e : v.internal_branches) add_edge(e);
    for (const auto& [b, ties] : v.tie_lines)
      for (int e : ties) add_edge(e);
    std::set<int> seen;
    std::vector<int> stack{v.buses.front()};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      if (!seen.insert(u).second) continue;
      for (int w : adj[u])
        if (!seen.count(w)) stack.push_back(w);
    }
    if (seen.size() != nodes.size())
      throw ValidationError("area " + std::to_string(v.area) +
                            " subgraph (with incident tie-lines) is disconnected");
  }
  return views;
}

// Node-branch incidence A (+1 at from, -1 at to, orientation from->to) and the
// reduced matrix A_r with the reference-bus row deleted.
inline std::pair<SpMat, SpMat> incidence_matrices(const NetworkCase& net) {
  const int n = net.n_buses(), m = net.n_branches();
  std::vector<Triplet> ta, tr;
  const int ref_row = net.bus_pos(net.reference_bus);
  auto reduced_row = [&](int r) { return r < ref_row ? r : r - 1; };
  for (int e = 0; e < m; ++e) {
    int rf = net.bus_pos(net.branches[e].from);
    int rt = net.bus_pos(net.branches[e].to);
    ta.emplace_back(rf, e, +1.0);
    ta.emplace_back(rt, e, -1.0);
    if (rf != ref_row) tr.emplace_back(reduced_row(rf), e, +1.0);
    if (rt != ref_row) tr.emplace_back(reduced_row(rt), e, -1.0);
  }
  SpMat A(n, m), Ar(n - 1, m);
  A.setFromTriplets(ta.begin(), ta.end());
  Ar.setFromTriplets(tr.begin(), tr.end());
  return {A, Ar};
}

// ------------------------------------------------------------------ JSON i/o

inline json case_to_json(const NetworkCase& net) {
  json jb = json::array();
  for (const Bus& b : net.buses)
    jb.push_back({{"id", b.id},
                  {"g_sh", b.g_sh},
                  {"b_sh", b.b_sh},
                  {"zero_injection", b.is_zero_injection},
                  {"v_true", b.v_true},
                  {"theta_true", b.theta_true}});
  json je = json::array();
  for (const Branch& br : net.branches)
    je.push_back({{"from", br.from}, {"to", br.to}, {"g", br.g}, {"b", br.b}, {"tap", br.tap}});
  json out = {{"base_mva", net.base_mva},
              {"reference_bus", net.reference_bus},
              {"buses", jb},
              {"branches", je}};
  if (!net.areas.empty()) {
    json ja = json::object();
    for (auto [bus, area] : net.areas) ja[std::to_string(bus)] = area;
    out["areas"] = ja;
  }
  return out;
}

inline std::string save_case_json(const NetworkCase& net) { return case_to_json(net).dump(1); }

inline NetworkCase case_from_json(const json& j) {
  for (const char* key : {"base_mva", "reference_bus", "buses", "branches"})
    if (!j.contains(key)) throw SchemaError(std::string("case JSON missing key '") + key + "'");
  NetworkCase net;
  try {
    net.base_mva = j.at("base_mva").get<double>();
    net.reference_bus = j.at("reference_bus").get<int>();
    for (const json& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      b.g_sh = jb.at("g_sh").get<double>();
      b.b_sh = jb.at("b_sh").get<double>();
      b.is_zero_injection = jb.at("zero_injection").get<bool>();
      b.v_true = jb.at("v_true").get<double>();
      b.theta_true = jb.at("theta_true").get<double>();
      net.buses.push_back(b);
    }
    for (const json& je : j.at("branches")) {
      Branch br;
      br.from = je.at("from").get<int>();
      br.to = je.at("to").get<int>();
      br.g = je.at("g").get<double>();
      br.b = je.at("b").get<double>();
      br.tap = je.at("tap").get<double>();
      net.branches.push_back(br);
    }
    if (j.contains("areas"))
      for (auto& [key, val] : j.at("areas").items())
        net.areas[std::stoi(key)] = val.get<int>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("case JSON malformed: ") + e.what());
  }
  net.finalize();
  return net;
}

inline NetworkCase load_case_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("case JSON does not parse: ") + e.what());
  }
  return case_from_json(j);
}

inline AreaPartition partition_from_json(const json& j) {
  if (!j.contains("assignment")) throw SchemaError("partition JSON missing 'assignment'");
  AreaPartition p;
  for (auto& [key, val] : j.at("assignment").items()) {
    p.assignment[std::stoi(key)] = val.get<int>();
    p.area_count = std::max(p.area_count, val.get<int>());
  }
  return p;
}

inline json partition_to_json(const AreaPartition& p) {
  json ja = json::object();
  for (auto [bus, area] : p.assignment) ja[std::to_string(bus)] = area;
  return {{"assignment", ja}};
}

}  // namespace drbse
