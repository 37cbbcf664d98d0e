#pragma once

#include <array>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "drbse/admm_common.hpp"
#include "drbse/admm_stage1.hpp"
#include "drbse/bilinear.hpp"
#include "drbse/message_bus.hpp"

namespace drbse {

// Which areas hold a state copy of a shared bus: the home area plus every
// area carrying it as a boundary copy. m_i >= 2 for every entry built here.
struct ConsensusGroup {
  int bus = 0;
  std::vector<int> members;
};

inline std::vector<ConsensusGroup> consensus_groups(const AreaPartition& part,
                                                    const std::vector<AreaView>& views) {
  std::map<int, std::set<int>> holders;
  for (const AreaView& v : views)
    for (int bus : v.boundary_copies) {
      holders[bus].insert(v.area);
      holders[bus].insert(part.area_of(bus));
    }
  std::vector<ConsensusGroup> groups;
  for (const auto& [bus, areas] : holders)
    groups.push_back({bus, std::vector<int>(areas.begin(), areas.end())});
  return groups;
}

// Second-stage area state: x_a over home buses plus boundary copies, with
// consensus over the shared nodal states and shrinkage over the transformed
// residuals. No equality constraints in this stage.
class Stage2Area {
 public:
  Stage2Area(const NetworkCase& net, const AreaPartition& part, const AreaView& view,
             const std::vector<ConsensusGroup>& groups, const std::vector<int>& pmu_buses,
             const SolverParams& params)
      : area_(view.area), params_(params) {
    ulay_ = make_intermediate_layout(net, part, view, pmu_buses);
    xlay_ = make_state_layout(net, view);
    C_ = build_stage2_matrix(ulay_, xlay_);
    u_ = VectorXd::Zero(ulay_.dim());
    thresh_ = VectorXd::Constant(ulay_.dim(), params.sigma_u);

    for (const ConsensusGroup& g : groups) {
      if (!xlay_.has_bus(g.bus)) continue;
      bool member = false;
      for (int a : g.members) member |= a == area_;
      if (!member) continue;
      Shared s;
      s.bus = g.bus;
      s.col_alpha = xlay_.col_alpha(g.bus);
      s.col_theta = xlay_.col_theta(g.bus);
      s.m = static_cast<int>(g.members.size());
      for (int a : g.members)
        if (a != area_) s.peers.push_back(a);
      shared_.push_back(s);
    }
    std::vector<int> slots;
    for (const Shared& s : shared_) {
      slots.push_back(s.col_alpha);
      if (s.col_theta >= 0) slots.push_back(s.col_theta);
    }
    std::sort(slots.begin(), slots.end());

    gain_.init(augmented_gain(C_, params.rho_s, slots, params.full_identity_augmentation), SpMat(),
               VectorXd());

    x_ = VectorXd::Zero(xlay_.dim());
    o_ = VectorXd::Zero(ulay_.dim());
    x_hat_ = VectorXd::Zero(xlay_.dim());
    for (Shared& s : shared_) s.bar_prev = {0.0, 0.0};
  }

  int area() const { return area_; }
  const IntermediateLayout& ulayout() const { return ulay_; }
  const StateLayout& xlayout() const { return xlay_; }
  const SpMat& C() const { return C_; }
  const VectorXd& x() const { return x_; }
  const VectorXd& o() const { return o_; }
  const VectorXd& u() const { return u_; }
  bool coupled() const { return !shared_.empty(); }

  // Local "measurements" for this stage: the transformed owned sub-vector,
  // plus directly measured PMU angles on home buses.
  void set_u(const VectorXd& u) { u_ = u; }
  void set_pmu_row(int slot, double value, double sigma) {
    u_[ulay_.row_pmu(slot)] = value;
    thresh_[ulay_.row_pmu(slot)] = sigma;
  }

  void local_update() {
    const VectorXd c = C_.transpose() * (u_ - o_) + params_.rho_s * x_hat_;
    x_ = gain_.solve(c);
    o_ = soft_threshold(u_ - C_ * x_, params_.lambda, thresh_);
  }

  std::vector<BusMessage> make_messages() const {
    std::map<int, BusMessage> by_peer;
    for (const Shared& s : shared_)
      for (int peer : s.peers) {
        BusMessage& msg = by_peer[peer];
        msg.from = area_;
        msg.to = peer;
        msg.kind = PayloadKind::stage2_bus_state;
        msg.entries.push_back({s.bus, {x_[s.col_alpha], theta_of(s)}});
      }
    std::vector<BusMessage> out;
    for (auto& [peer, msg] : by_peer) out.push_back(std::move(msg));
    return out;
  }

  std::pair<double, double> consensus_update(const MessageBus& bus) {
    std::map<int, std::map<int, std::array<double, 2>>> from_peer;  // peer -> bus -> state
    for (const Shared& s : shared_)
      for (int peer : s.peers)
        if (!from_peer.count(peer)) {
          const BusMessage& msg = bus.fetch(area_, peer);
          for (const auto& [bus_id, st] : msg.entries) from_peer[peer][bus_id] = st;
        }
    double r_inf = 0.0, d_inf = 0.0;
    for (Shared& s : shared_) {
      std::array<double, 2> own{x_[s.col_alpha], theta_of(s)};
      std::array<double, 2> sum = own;
      for (int peer : s.peers) {
        auto it = from_peer[peer].find(s.bus);
        if (it == from_peer[peer].end())
          throw ProtocolError("bus " + std::to_string(s.bus) + " missing from message " +
                              std::to_string(peer) + "->" + std::to_string(area_));
        sum[0] += it->second[0];
        sum[1] += it->second[1];
      }
      // primal residual mirrors the first stage: distance of the copy to the
      // consensus mean (for two copies this is half the pairwise mismatch)
      const std::array<double, 2> bar{sum[0] / s.m, sum[1] / s.m};
      r_inf = std::max({r_inf, std::abs(own[0] - bar[0]), std::abs(own[1] - bar[1])});
      d_inf = std::max({d_inf, std::abs(bar[0] - s.bar_prev[0]), std::abs(bar[1] - s.bar_prev[1])});
      x_hat_[s.col_alpha] += 2.0 * bar[0] - s.bar_prev[0] - own[0];
      if (s.col_theta >= 0) x_hat_[s.col_theta] += 2.0 * bar[1] - s.bar_prev[1] - own[1];
      s.bar_prev = bar;
    }
    return {r_inf, d_inf};
  }

  double objective() const {
    const VectorXd r = u_ - C_ * x_ - o_;
    double j = 0.5 * r.squaredNorm();
    for (int i = 0; i < o_.size(); ++i) j += params_.lambda * thresh_[i] * std::abs(o_[i]);
    return j;
  }

  std::map<int, BusState> home_state(const AreaView& view) const {
    std::map<int, BusState> all = state_from_x(x_, xlay_);
    std::map<int, BusState> out;
    for (int id : view.buses) out[id] = all.at(id);
    return out;
  }

  // Copy disagreement diagnostics after convergence.
  double copy_value_alpha(int bus) const { return x_[xlay_.col_alpha(bus)]; }
  double copy_value_theta(int bus) const {
    const int c = xlay_.col_theta(bus);
    return c < 0 ? 0.0 : x_[c];
  }

 private:
  struct Shared {
    int bus = 0;
    int col_alpha = -1;
    int col_theta = -1;  // -1: this copy is the pinned reference angle
    int m = 0;
    std::vector<int> peers;
    std::array<double, 2> bar_prev{0.0, 0.0};
  };

  double theta_of(const Shared& s) const { return s.col_theta < 0 ? 0.0 : x_[s.col_theta]; }

  int area_;
  SolverParams params_;
  IntermediateLayout ulay_;
  StateLayout xlay_;
  SpMat C_;
  VectorXd u_, thresh_;
  GainSolver gain_;
  std::vector<Shared> shared_;
  VectorXd x_, o_, x_hat_;
};

inline StageResult run_stage2(std::vector<Stage2Area>& areas, MessageBus& bus,
                              const SolverParams& params, const std::vector<int>& order = {}) {
  std::vector<int> ord = order;
  if (ord.empty())
    for (size_t i = 0; i < areas.size(); ++i) ord.push_back(static_cast<int>(i));

  bool coupled = false;
  for (const Stage2Area& a : areas) coupled |= a.coupled();

  StageResult res;
  VectorXd prev_x, prev_o;
  for (int t = 1; t <= params.max_iter; ++t) {
    for (int i : ord) areas[i].local_update();
    for (int i : ord)
      for (BusMessage& m : areas[i].make_messages()) bus.post(std::move(m));
    bus.deliver("stage2", t);

    double r_inf = 0.0, d_inf = 0.0;
    for (int i : ord) {
      auto [r, d] = areas[i].consensus_update(bus);
      r_inf = std::max(r_inf, r);
      d_inf = std::max(d_inf, d);
    }
    double delta = std::max(r_inf, d_inf);
    if (!coupled) {
      delta = std::numeric_limits<double>::infinity();
      if (t > 1)
        delta = std::max((areas[0].x() - prev_x).lpNorm<Eigen::Infinity>(),
                         (areas[0].o() - prev_o).lpNorm<Eigen::Infinity>());
      prev_x = areas[0].x();
      prev_o = areas[0].o();
    }

    TraceRow row{t, delta, r_inf, d_inf, {}};
    for (const Stage2Area& a : areas) row.objectives.push_back(a.objective());
    res.trace.push_back(row);
    res.iterations = t;
    if (delta <= params.epsilon) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace drbse
