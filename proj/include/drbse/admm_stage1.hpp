#pragma once

#include <array>
#include <limits>
#include <map>
#include <vector>

#include "drbse/admm_common.hpp"
#include "drbse/bilinear.hpp"
#include "drbse/message_bus.hpp"

namespace drbse {

struct TraceRow {
  int iteration = 0;
  double delta = 0.0;
  double r_inf = 0.0;
  double d_inf = 0.0;
  std::vector<double> objectives;  // J_a per area
};

// One area's first-stage state: local copies y_a over internal variables plus
// the (K, L) pairs of every incident tie-line, an outlier vector over the
// local measurements, and the sparse auxiliary vector that carries consensus
// information on tie slots only.
class Stage1Area {
 public:
  Stage1Area(const NetworkCase& net, const AreaPartition& part, const AreaView& view,
             const MeasurementSet& ms, const std::vector<int>& meas_indices,
             const SolverParams& params)
      : area_(view.area), params_(params) {
    layout_ = make_stage1_layout(net, part, view);
    std::vector<int> stage1_meas;
    for (int i : meas_indices)
      if (in_first_stage(ms.measurements[i].kind)) stage1_meas.push_back(i);
    std::vector<int> zi;
    for (int b : ms.zero_injections)
      if (view.has_bus(b)) zi.push_back(b);
    sys_ = build_stage1_system(net, ms, stage1_meas, zi, layout_, params.scaling);

    for (const auto& [neighbor, ties] : view.tie_lines) {
      auto& lst = ties_by_neighbor_[neighbor];
      lst = ties;
      std::sort(lst.begin(), lst.end());
      for (int e : lst) {
        consensus_slots_.push_back(layout_.col_k(e));
        consensus_slots_.push_back(layout_.col_l(e));
      }
    }
    std::sort(consensus_slots_.begin(), consensus_slots_.end());

    gain_.init(augmented_gain(sys_.B, params.rho_f, consensus_slots_,
                              params.full_identity_augmentation),
               sys_.E, sys_.z_e);

    // flat start: U = 1, K = 1, L = 0; the auxiliary vector and the previous
    // consensus averages start at the same point so iteration 1 is well defined
    y_ = VectorXd::Zero(layout_.dim());
    for (size_t s = 0; s < layout_.bus_ids.size(); ++s) y_[s] = 1.0;
    for (const OrientedBranch& ob : layout_.branches) y_[layout_.col_k(ob.branch)] = 1.0;
    o_ = VectorXd::Zero(sys_.z.size());
    y_hat_ = VectorXd::Zero(layout_.dim());
    for (const auto& [neighbor, ties] : ties_by_neighbor_)
      for (int e : ties) {
        y_hat_[layout_.col_k(e)] = 1.0;
        y_hat_[layout_.col_l(e)] = 0.0;
        bar_prev_[e] = {1.0, 0.0};
      }
  }

  int area() const { return area_; }
  const StageOneLayout& layout() const { return layout_; }
  const Stage1System& system() const { return sys_; }
  const VectorXd& y() const { return y_; }
  const VectorXd& o() const { return o_; }
  const std::map<int, std::vector<int>>& ties_by_neighbor() const { return ties_by_neighbor_; }

  // Closed-form update of (y_a, o_a): equality-constrained ridge step against
  // the cached gain, then shrinkage of the measurement residuals.
  void local_update() {
    const VectorXd c = sys_.B.transpose() * (sys_.z - o_) + params_.rho_f * y_hat_;
    y_ = gain_.solve(c);
    o_ = soft_threshold(sys_.z - sys_.B * y_, params_.lambda, sys_.threshold_scale);
  }

  BusMessage make_message(int neighbor) const {
    BusMessage msg;
    msg.from = area_;
    msg.to = neighbor;
    msg.kind = PayloadKind::stage1_tie_kl;
    for (int e : ties_by_neighbor_.at(neighbor))
      msg.entries.push_back({e, {y_[layout_.col_k(e)], y_[layout_.col_l(e)]}});
    return msg;
  }

  // Averages the two copies of every shared tie-line, advances the auxiliary
  // vector, and returns this area's (r_inf, d_inf) residual contributions.
  std::pair<double, double> consensus_update(const MessageBus& bus) {
    double r_inf = 0.0, d_inf = 0.0;
    for (const auto& [neighbor, ties] : ties_by_neighbor_) {
      const BusMessage& msg = bus.fetch(area_, neighbor);
      std::map<int, std::array<double, 2>> peer;
      for (const auto& [e, kl] : msg.entries) peer[e] = kl;
      for (int e : ties) {
        auto it = peer.find(e);
        if (it == peer.end())
          throw ProtocolError("tie-line " + std::to_string(e) + " missing from message " +
                              std::to_string(neighbor) + "->" + std::to_string(area_));
        const int ck = layout_.col_k(e), cl = layout_.col_l(e);
        const std::array<double, 2> own{y_[ck], y_[cl]};
        const std::array<double, 2> bar{0.5 * (own[0] + it->second[0]),
                                        0.5 * (own[1] + it->second[1])};
        r_inf = std::max({r_inf, 0.5 * std::abs(own[0] - it->second[0]),
                          0.5 * std::abs(own[1] - it->second[1])});
        const std::array<double, 2>& prev = bar_prev_[e];
        d_inf = std::max({d_inf, std::abs(bar[0] - prev[0]), std::abs(bar[1] - prev[1])});
        y_hat_[ck] += 2.0 * bar[0] - prev[0] - own[0];
        y_hat_[cl] += 2.0 * bar[1] - prev[1] - own[1];
        bar_prev_[e] = bar;
      }
    }
    return {r_inf, d_inf};
  }

  double objective() const {
    const VectorXd r = sys_.z - sys_.B * y_ - o_;
    double j = 0.5 * r.squaredNorm();
    for (int i = 0; i < o_.size(); ++i)
      j += params_.lambda * sys_.threshold_scale[i] * std::abs(o_[i]);
    return j;
  }

  double equality_violation() const {
    if (sys_.E.rows() == 0) return 0.0;
    return (sys_.E * y_ - sys_.z_e).lpNorm<Eigen::Infinity>();
  }

 private:
  int area_;
  SolverParams params_;
  StageOneLayout layout_;
  Stage1System sys_;
  GainSolver gain_;
  std::vector<int> consensus_slots_;
  std::map<int, std::vector<int>> ties_by_neighbor_;
  std::map<int, std::array<double, 2>> bar_prev_;
  VectorXd y_, o_, y_hat_;
};

struct StageResult {
  bool converged = false;
  int iterations = 0;
  std::vector<TraceRow> trace;
};

// Bulk-synchronous rounds: every area updates on round-t data, posts its tie
// values, and only after the barrier reads its neighbors' values. `order`
// permutes the in-round scheduling; results must not depend on it.
inline StageResult run_stage1(std::vector<Stage1Area>& areas, MessageBus& bus,
                              const SolverParams& params, const std::vector<int>& order = {}) {
  std::vector<int> ord = order;
  if (ord.empty())
    for (size_t i = 0; i < areas.size(); ++i) ord.push_back(static_cast<int>(i));

  bool ties_exist = false;
  for (const Stage1Area& a : areas) ties_exist |= !a.ties_by_neighbor().empty();

  StageResult res;
  VectorXd prev_y, prev_o;  // iterate-drift stopping for the uncoupled case
  for (int t = 1; t <= params.max_iter; ++t) {
    for (int i : ord) areas[i].local_update();
    for (int i : ord) {
      const Stage1Area& a = areas[i];
      for (const auto& [neighbor, ties] : a.ties_by_neighbor()) bus.post(a.make_message(neighbor));
    }
    bus.deliver("stage1", t);

    double r_inf = 0.0, d_inf = 0.0;
    for (int i : ord) {
      auto [r, d] = areas[i].consensus_update(bus);
      r_inf = std::max(r_inf, r);
      d_inf = std::max(d_inf, d);
    }
    double delta = std::max(r_inf, d_inf);
    if (!ties_exist) {
      // uncoupled (single-area) run: no consensus residuals, stop on iterate drift
      delta = std::numeric_limits<double>::infinity();
      if (t > 1)
        delta = std::max((areas[0].y() - prev_y).lpNorm<Eigen::Infinity>(),
                         (areas[0].o() - prev_o).lpNorm<Eigen::Infinity>());
      prev_y = areas[0].y();
      prev_o = areas[0].o();
    }

    TraceRow row{t, delta, r_inf, d_inf, {}};
    for (const Stage1Area& a : areas) row.objectives.push_back(a.objective());
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
