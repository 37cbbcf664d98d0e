#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "drbse/case_model.hpp"
#include "drbse/errors.hpp"
#include "drbse/measurement.hpp"

namespace drbse {

using Eigen::VectorXd;

inline double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

// ------------------------------------------------------------------ layouts

// First-stage vector y = {U_i} ++ {(K_e, L_e)}: U block first, then one (K, L)
// pair per branch in scope.
struct StageOneLayout {
  std::vector<int> bus_ids;
  std::vector<OrientedBranch> branches;

  std::unordered_map<int, int> bus_slot;     // bus id -> position in bus_ids
  std::unordered_map<int, int> branch_slot;  // branch index -> position in branches

  int dim() const { return static_cast<int>(bus_ids.size() + 2 * branches.size()); }
  int col_u(int bus_id) const {
    auto it = bus_slot.find(bus_id);
    if (it == bus_slot.end())
      throw ValidationError("bus " + std::to_string(bus_id) + " outside layout scope");
    return it->second;
  }
  bool has_branch(int e) const { return branch_slot.count(e) != 0; }
  int col_k(int e) const { return static_cast<int>(bus_ids.size()) + 2 * slot(e); }
  int col_l(int e) const { return col_k(e) + 1; }
  double l_sign(int e) const { return branches[slot(e)].l_sign; }

  void index() {
    bus_slot.clear();
    branch_slot.clear();
    for (int i = 0; i < static_cast<int>(bus_ids.size()); ++i) bus_slot[bus_ids[i]] = i;
    for (int i = 0; i < static_cast<int>(branches.size()); ++i)
      branch_slot[branches[i].branch] = i;
  }

 private:
  int slot(int e) const {
    auto it = branch_slot.find(e);
    if (it == branch_slot.end())
      throw ValidationError("branch " + std::to_string(e) + " outside layout scope");
    return it->second;
  }
};

inline StageOneLayout make_stage1_layout(const NetworkCase& net) {
  StageOneLayout lay;
  for (const Bus& b : net.buses) lay.bus_ids.push_back(b.id);
  std::sort(lay.bus_ids.begin(), lay.bus_ids.end());
  for (int e = 0; e < net.n_branches(); ++e) lay.branches.push_back(orient_case(net, e));
  lay.index();
  return lay;
}

// Area scope: home buses plus (K, L) copies for internal and all incident
// tie-line branches.
inline StageOneLayout make_stage1_layout(const NetworkCase& net, const AreaPartition& part,
                                         const AreaView& view) {
  StageOneLayout lay;
  lay.bus_ids = view.buses;
  std::vector<int> branch_ids = view.internal_branches;
  for (int e : view.incident_tie_branches()) branch_ids.push_back(e);
  std::sort(branch_ids.begin(), branch_ids.end());
  for (int e : branch_ids) lay.branches.push_back(orient_branch(net, part, e));
  lay.index();
  return lay;
}

// Intermediate vector u = {alpha_i} ++ {(alpha_e, theta_e)} ++ {pmu theta_i};
// the same struct also orders the rows of the second-stage matrix C.
struct IntermediateLayout {
  std::vector<int> bus_ids;
  std::vector<OrientedBranch> branches;
  std::vector<int> pmu_buses;

  int dim() const {
    return static_cast<int>(bus_ids.size() + 2 * branches.size() + pmu_buses.size());
  }
  int row_alpha_bus(int slot) const { return slot; }
  int row_alpha_branch(int slot) const {
    return static_cast<int>(bus_ids.size()) + 2 * slot;
  }
  int row_theta_branch(int slot) const { return row_alpha_branch(slot) + 1; }
  int row_pmu(int slot) const {
    return static_cast<int>(bus_ids.size() + 2 * branches.size()) + slot;
  }
};

inline IntermediateLayout make_intermediate_layout(const NetworkCase& net,
                                                   const std::vector<int>& pmu_buses = {}) {
  IntermediateLayout lay;
  for (const Bus& b : net.buses) lay.bus_ids.push_back(b.id);
  std::sort(lay.bus_ids.begin(), lay.bus_ids.end());
  for (int e = 0; e < net.n_branches(); ++e) lay.branches.push_back(orient_case(net, e));
  lay.pmu_buses = pmu_buses;
  return lay;
}

// Per-area scope after the stage-1 overlap is dropped: home buses plus owned
// branches only (internal + lower-index-owned ties).
inline IntermediateLayout make_intermediate_layout(const NetworkCase& net,
                                                   const AreaPartition& part, const AreaView& view,
                                                   const std::vector<int>& pmu_buses = {}) {
  IntermediateLayout lay;
  lay.bus_ids = view.buses;
  for (int e : view.owned_branches()) lay.branches.push_back(orient_branch(net, part, e));
  for (int id : pmu_buses)
    if (view.has_bus(id)) lay.pmu_buses.push_back(id);
  return lay;
}

// State vector x = [alpha; theta], reference angle excluded.
struct StateLayout {
  std::vector<int> scope_buses;  // home buses first, then boundary copies
  int reference_bus = 0;
  std::unordered_map<int, int> slot;
  int n_theta = 0;

  int dim() const { return static_cast<int>(scope_buses.size()) + n_theta; }
  int col_alpha(int bus_id) const { return at(bus_id); }
  // -1 for the reference bus: its angle is pinned at zero and has no column.
  int col_theta(int bus_id) const {
    int s = at(bus_id);
    int ref = reference_in_scope() ? slot.at(reference_bus) : -1;
    if (s == ref) return -1;
    int before = (ref >= 0 && s > ref) ? s - 1 : s;
    return static_cast<int>(scope_buses.size()) + before;
  }
  bool reference_in_scope() const { return slot.count(reference_bus) != 0; }
  bool has_bus(int id) const { return slot.count(id) != 0; }

  void index() {
    slot.clear();
    for (int i = 0; i < static_cast<int>(scope_buses.size()); ++i) slot[scope_buses[i]] = i;
    n_theta = static_cast<int>(scope_buses.size()) - (reference_in_scope() ? 1 : 0);
  }

 private:
  int at(int bus_id) const {
    auto it = slot.find(bus_id);
    if (it == slot.end())
      throw ValidationError("bus " + std::to_string(bus_id) + " outside state scope");
    return it->second;
  }
};

inline StateLayout make_state_layout(const NetworkCase& net) {
  StateLayout lay;
  for (const Bus& b : net.buses) lay.scope_buses.push_back(b.id);
  std::sort(lay.scope_buses.begin(), lay.scope_buses.end());
  lay.reference_bus = net.reference_bus;
  lay.index();
  return lay;
}

inline StateLayout make_state_layout(const NetworkCase& net, const AreaView& view) {
  StateLayout lay;
  lay.scope_buses = view.buses;
  for (int id : view.boundary_copies) lay.scope_buses.push_back(id);
  lay.reference_bus = net.reference_bus;
  lay.index();
  return lay;
}

// ---------------------------------------------------------------- operators

// Elementwise shrinkage: the proximal map of lambda * |.|.
inline double soft_threshold(double xi, double lambda) {
  if (xi > lambda) return xi - lambda;
  if (xi < -lambda) return xi + lambda;
  return 0.0;
}

inline VectorXd soft_threshold(const VectorXd& v, double lambda) {
  VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = soft_threshold(v[i], lambda);
  return out;
}

inline VectorXd soft_threshold(const VectorXd& v, double lambda, const VectorXd& scale) {
  VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = soft_threshold(v[i], lambda * scale[i]);
  return out;
}

// -------------------------------------------------------- state <-> vectors

inline VectorXd y_from_state(const NetworkCase& net, const StageOneLayout& lay,
                             const VectorXd& V, const VectorXd& theta) {
  for (int i = 0; i < V.size(); ++i)
    if (V[i] <= 0.0) throw DomainError("non-positive magnitude at bus position " + std::to_string(i));
  VectorXd y(lay.dim());
  for (size_t s = 0; s < lay.bus_ids.size(); ++s) {
    const int p = net.bus_pos(lay.bus_ids[s]);
    y[s] = V[p] * V[p];
  }
  for (const OrientedBranch& ob : lay.branches) {
    const int f = net.bus_pos(ob.from), t = net.bus_pos(ob.to);
    const double d = theta[f] - theta[t];
    y[lay.col_k(ob.branch)] = V[f] * V[t] * std::cos(d);
    y[lay.col_l(ob.branch)] = V[f] * V[t] * std::sin(d) * 1.0;
  }
  return y;
}

// Oracle-side u(V, theta): alpha_i = 2 ln V_i, alpha_e = alpha_i + alpha_j,
// theta_e = theta_i - theta_j wrapped to (-pi, pi]. PMU rows carry theta_i.
inline VectorXd u_from_state(const NetworkCase& net, const IntermediateLayout& lay,
                             const VectorXd& V, const VectorXd& theta) {
  VectorXd u(lay.dim());
  for (size_t s = 0; s < lay.bus_ids.size(); ++s)
    u[lay.row_alpha_bus(s)] = 2.0 * std::log(V[net.bus_pos(lay.bus_ids[s])]);
  for (size_t s = 0; s < lay.branches.size(); ++s) {
    const OrientedBranch& ob = lay.branches[s];
    const int f = net.bus_pos(ob.from), t = net.bus_pos(ob.to);
    u[lay.row_alpha_branch(s)] = 2.0 * (std::log(V[f]) + std::log(V[t]));
    u[lay.row_theta_branch(s)] = wrap_angle(theta[f] - theta[t]);
  }
  for (size_t s = 0; s < lay.pmu_buses.size(); ++s)
    u[lay.row_pmu(s)] = theta[net.bus_pos(lay.pmu_buses[s])];
  return u;
}

// The intermediate nonlinear transformation, purely local to the scope of
// `out`. Every out element must exist in `in` with the same orientation. PMU
// slots are left at zero; the caller fills them from measured angles.
inline VectorXd nonlinear_transform(const VectorXd& y, const StageOneLayout& in,
                                    const IntermediateLayout& out) {
  VectorXd u = VectorXd::Zero(out.dim());
  for (size_t s = 0; s < out.bus_ids.size(); ++s) {
    const double U = y[in.col_u(out.bus_ids[s])];
    if (U <= 0.0)
      throw DomainError("U <= 0 at bus " + std::to_string(out.bus_ids[s]));
    u[out.row_alpha_bus(s)] = std::log(U);
  }
  for (size_t s = 0; s < out.branches.size(); ++s) {
    const OrientedBranch& ob = out.branches[s];
    if (!in.has_branch(ob.branch))
      throw ValidationError("branch " + std::to_string(ob.branch) + " missing from input layout");
    const double K = y[in.col_k(ob.branch)];
    const double L = y[in.col_l(ob.branch)] * in.l_sign(ob.branch) * ob.l_sign;
    const double m2 = K * K + L * L;
    if (m2 == 0.0)
      throw DomainError("K^2 + L^2 = 0 on branch (" + std::to_string(ob.from) + "," +
                        std::to_string(ob.to) + ")");
    u[out.row_alpha_branch(s)] = std::log(m2);
    u[out.row_theta_branch(s)] = std::atan2(L, K);
  }
  return u;
}

struct BusState {
  double v = 1.0;
  double theta = 0.0;
};

inline std::map<int, BusState> state_from_x(const VectorXd& x, const StateLayout& lay) {
  std::map<int, BusState> out;
  for (int id : lay.scope_buses) {
    BusState s;
    s.v = std::exp(0.5 * x[lay.col_alpha(id)]);
    const int ct = lay.col_theta(id);
    s.theta = ct < 0 ? 0.0 : x[ct];
    out[id] = s;
  }
  return out;
}

// ------------------------------------------------------------ design matrices

// How measurement rows are scaled before the robust solve. The shrinkage dead
// zone is lambda times the per-row threshold scale, so all three modes place
// the same estimator on different numerical scales:
//   none           raw p.u. rows, per-row thresholds lambda*sigma_i
//   relative_sigma rows scaled by sigma_ref/sigma_i (sigma_ref = loosest
//                  meter), uniform thresholds lambda*sigma_ref; same argmin
//                  as inverse_sigma but keeps rows on the p.u. scale that the
//                  consensus penalty rho is calibrated against
//   inverse_sigma  rows scaled by 1/sigma_i, uniform threshold lambda
// `none` under-prices residuals on accurate meters relative to the rest,
// which weakens bad-data rejection; relative_sigma is the default.
enum class RowScaling { none, relative_sigma, inverse_sigma };

// First-stage system for one scope: z ~ B y with hard rows E y = z_e.
// threshold_scale carries the per-row soft-threshold multiplier; unit_scale
// maps an outlier entry back to measurement units.
struct Stage1System {
  SpMat B;
  VectorXd z;
  SpMat E;
  VectorXd z_e;
  VectorXd threshold_scale;
  VectorXd unit_scale;
  std::vector<int> meas_index;      // row -> index into the global MeasurementSet
  std::vector<int> constraint_bus;  // E row -> bus id (P row then Q row per bus)
};

inline Stage1System build_stage1_system(const NetworkCase& net, const MeasurementSet& ms,
                                        const std::vector<int>& meas_indices,
                                        const std::vector<int>& zero_inj_buses,
                                        const StageOneLayout& lay,
                                        RowScaling scaling = RowScaling::relative_sigma) {
  Stage1System sys;
  double sigma_ref = 0.0;
  for (int mi : meas_indices) sigma_ref = std::max(sigma_ref, ms.measurements[mi].sigma);
  std::vector<Triplet> tb, te;
  int row = 0;
  sys.z.resize(static_cast<int>(meas_indices.size()));
  sys.threshold_scale.resize(sys.z.size());
  sys.unit_scale.resize(sys.z.size());
  for (int mi : meas_indices) {
    const Measurement& m = ms.measurements[mi];
    if (!in_first_stage(m.kind))
      throw ValidationError("pmu_angle measurement cannot enter the first stage");
    double w = 1.0;
    if (scaling == RowScaling::inverse_sigma) w = 1.0 / m.sigma;
    if (scaling == RowScaling::relative_sigma) w = sigma_ref / m.sigma;
    for (const PhysTerm& t : meas_terms(net, m)) {
      switch (t.var) {
        case PhysTerm::Var::U:
          tb.emplace_back(row, lay.col_u(net.buses[t.index].id), w * t.coef);
          break;
        case PhysTerm::Var::K:
          tb.emplace_back(row, lay.col_k(t.index), w * t.coef);
          break;
        case PhysTerm::Var::L:
          tb.emplace_back(row, lay.col_l(t.index), w * t.coef * lay.l_sign(t.index));
          break;
      }
    }
    sys.z[row] = w * m.value;
    switch (scaling) {
      case RowScaling::none: sys.threshold_scale[row] = m.sigma; break;
      case RowScaling::relative_sigma: sys.threshold_scale[row] = sigma_ref; break;
      case RowScaling::inverse_sigma: sys.threshold_scale[row] = 1.0; break;
    }
    sys.unit_scale[row] = 1.0 / w;
    sys.meas_index.push_back(mi);
    ++row;
  }
  int erow = 0;
  for (int bus_id : zero_inj_buses) {
    for (bool reactive : {false, true}) {
      for (const PhysTerm& t : injection_terms(net, bus_id, reactive)) {
        switch (t.var) {
          case PhysTerm::Var::U:
            te.emplace_back(erow, lay.col_u(net.buses[t.index].id), t.coef);
            break;
          case PhysTerm::Var::K:
            te.emplace_back(erow, lay.col_k(t.index), t.coef);
            break;
          case PhysTerm::Var::L:
            te.emplace_back(erow, lay.col_l(t.index), t.coef * lay.l_sign(t.index));
            break;
        }
      }
      sys.constraint_bus.push_back(bus_id);
      ++erow;
    }
  }
  sys.B.resize(row, lay.dim());
  sys.B.setFromTriplets(tb.begin(), tb.end());
  sys.E.resize(erow, lay.dim());
  sys.E.setFromTriplets(te.begin(), te.end());
  sys.z_e = VectorXd::Zero(erow);
  return sys;
}

// Second-stage matrix C: alpha_i rows pick alpha_i; alpha_e rows are +1,+1 on
// the endpoint alphas; theta_e rows are +1/-1 with the reference column
// omitted; PMU rows pick theta_i.
inline SpMat build_stage2_matrix(const IntermediateLayout& ulay, const StateLayout& xlay) {
  std::vector<Triplet> tc;
  for (size_t s = 0; s < ulay.bus_ids.size(); ++s)
    tc.emplace_back(ulay.row_alpha_bus(s), xlay.col_alpha(ulay.bus_ids[s]), 1.0);
  for (size_t s = 0; s < ulay.branches.size(); ++s) {
    const OrientedBranch& ob = ulay.branches[s];
    tc.emplace_back(ulay.row_alpha_branch(s), xlay.col_alpha(ob.from), 1.0);
    tc.emplace_back(ulay.row_alpha_branch(s), xlay.col_alpha(ob.to), 1.0);
    if (int cf = xlay.col_theta(ob.from); cf >= 0)
      tc.emplace_back(ulay.row_theta_branch(s), cf, 1.0);
    if (int ct = xlay.col_theta(ob.to); ct >= 0)
      tc.emplace_back(ulay.row_theta_branch(s), ct, -1.0);
  }
  for (size_t s = 0; s < ulay.pmu_buses.size(); ++s)
    if (int c = xlay.col_theta(ulay.pmu_buses[s]); c >= 0)
      tc.emplace_back(ulay.row_pmu(s), c, 1.0);
  SpMat C(ulay.dim(), xlay.dim());
  C.setFromTriplets(tc.begin(), tc.end());
  return C;
}

}  // namespace drbse
