#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "drbse/admm_common.hpp"
#include "drbse/bilinear.hpp"
#include "drbse/measurement.hpp"

namespace drbse {

struct CentralEstimate {
  VectorXd V;      // by bus position
  VectorXd theta;  // by bus position, reference at zero
  VectorXd o_f, o_s;
  bool converged = false;
  int iterations = 0;
  std::vector<int> removed_measurements;  // indices into the MeasurementSet
};

// Measurement function h at a polar state, for any kind.
inline double h_value(const NetworkCase& net, const Measurement& m, const VectorXd& V,
                      const VectorXd& theta) {
  if (m.kind == MeasurementKind::pmu_angle) return theta[net.bus_pos(m.bus)];
  return eval_terms(net, meas_terms(net, m), V, theta);
}

// ----------------------------------------------------------- centralized RBSE

// Both stages solved globally by alternating an exact linear solve in the
// state block with the shrinkage step in the outlier block. The first stage
// enforces E y = z_e through the KKT system; the KKT matrix is constant over
// the alternation and factorized once.
inline CentralEstimate centralized_rbse(const NetworkCase& net, const MeasurementSet& ms,
                                        const SolverParams& params,
                                        const std::vector<int>& pmu_buses = {}) {
  if (params.lambda <= 0.0) throw ValidationError("lambda must be positive");
  const int n_all = ms.size();
  std::vector<int> stage1_meas;
  std::vector<int> pmu_meas;
  for (int i = 0; i < n_all; ++i)
    (in_first_stage(ms.measurements[i].kind) ? stage1_meas : pmu_meas).push_back(i);

  StageOneLayout ylay = make_stage1_layout(net);
  Stage1System sys =
      build_stage1_system(net, ms, stage1_meas, ms.zero_injections, ylay, params.scaling);

  const int n = ylay.dim(), me = static_cast<int>(sys.E.rows());
  SpMat BtB = SpMat(sys.B.transpose() * sys.B);
  std::vector<Triplet> tk;
  for (int k = 0; k < BtB.outerSize(); ++k)
    for (SpMat::InnerIterator it(BtB, k); it; ++it)
      tk.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < sys.E.outerSize(); ++k)
    for (SpMat::InnerIterator it(sys.E, k); it; ++it) {
      tk.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      tk.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
    }
  SpMat KKT(n + me, n + me);
  KKT.setFromTriplets(tk.begin(), tk.end());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(KKT);
  if (lu.info() != Eigen::Success)
    throw ObservabilityError("first-stage KKT system is singular");

  CentralEstimate est;
  VectorXd o = VectorXd::Zero(sys.z.size());
  VectorXd y = VectorXd::Zero(n);
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < 200; ++sweep) {
    VectorXd rhs(n + me);
    rhs.head(n) = sys.B.transpose() * (sys.z - o);
    rhs.tail(me) = sys.z_e;
    VectorXd sol = lu.solve(rhs);
    VectorXd y_new = sol.head(n);
    o = soft_threshold(sys.z - sys.B * y_new, params.lambda, sys.threshold_scale);
    const VectorXd r = sys.z - sys.B * y_new - o;
    double obj = 0.5 * r.squaredNorm();
    for (int i = 0; i < o.size(); ++i)
      obj += params.lambda * sys.threshold_scale[i] * std::abs(o[i]);
    if (obj > prev_obj + 1e-9)
      throw NumericalError("first-stage alternation objective increased");
    prev_obj = obj;
    ++est.iterations;
    const double drift = sweep == 0 ? 1.0 : (y_new - y).lpNorm<Eigen::Infinity>();
    y = y_new;
    if (drift < 1e-9) break;
  }
  est.o_f = o.cwiseProduct(sys.unit_scale);

  IntermediateLayout ulay = make_intermediate_layout(net, pmu_buses);
  StateLayout xlay = make_state_layout(net);
  VectorXd u = nonlinear_transform(y, ylay, ulay);
  VectorXd thresh = VectorXd::Constant(ulay.dim(), params.sigma_u);
  for (size_t s = 0; s < ulay.pmu_buses.size(); ++s) {
    // measured angles join the second stage directly
    for (int mi : pmu_meas)
      if (ms.measurements[mi].bus == ulay.pmu_buses[s]) {
        u[ulay.row_pmu(s)] = ms.measurements[mi].value;
        thresh[ulay.row_pmu(s)] = ms.measurements[mi].sigma;
      }
  }

  SpMat C = build_stage2_matrix(ulay, xlay);
  Eigen::SimplicialLDLT<SpMat> ldlt(SpMat(C.transpose() * C));
  if (ldlt.info() != Eigen::Success)
    throw ObservabilityError("second-stage normal equations are singular");
  VectorXd x = VectorXd::Zero(xlay.dim());
  VectorXd os = VectorXd::Zero(u.size());
  prev_obj = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < 200; ++sweep) {
    VectorXd x_new = ldlt.solve(C.transpose() * (u - os));
    os = soft_threshold(u - C * x_new, params.lambda, thresh);
    const VectorXd r = u - C * x_new - os;
    double obj = 0.5 * r.squaredNorm();
    for (int i = 0; i < os.size(); ++i) obj += params.lambda * thresh[i] * std::abs(os[i]);
    if (obj > prev_obj + 1e-9)
      throw NumericalError("second-stage alternation objective increased");
    prev_obj = obj;
    ++est.iterations;
    const double drift = sweep == 0 ? 1.0 : (x_new - x).lpNorm<Eigen::Infinity>();
    x = x_new;
    if (drift < 1e-9) break;
  }
  est.o_s = os;
  est.converged = true;

  auto st = state_from_x(x, xlay);
  est.V.resize(net.n_buses());
  est.theta.resize(net.n_buses());
  for (const auto& [id, s] : st) {
    est.V[net.bus_pos(id)] = s.v;
    est.theta[net.bus_pos(id)] = s.theta;
  }
  return est;
}

// -------------------------------------------------------------- WLS baseline

namespace detail {

struct WlsWork {
  std::vector<int> active;  // measurement indices in row order
  SpMat H;                  // at current state
  VectorXd resid;           // z - h(x)
  VectorXd w;               // 1/sigma^2
  SpMat Ce;                 // equality Jacobian
  VectorXd he;              // equality residual h_e(x)
};

// Jacobian rows via the chain rule through (U, K, L).
inline void fill_h_rows(const NetworkCase& net, const MeasurementSet& ms,
                        const std::vector<int>& active, const StateLayout& xlay,
                        const VectorXd& V, const VectorXd& theta, WlsWork& work) {
  const int nb = net.n_buses();
  auto col_v = [&](int pos) { return xlay.col_alpha(net.buses[pos].id); };
  auto col_t = [&](int pos) { return xlay.col_theta(net.buses[pos].id); };

  std::vector<Triplet> th, tc;
  auto add_terms = [&](int row, const std::vector<PhysTerm>& terms, std::vector<Triplet>& out) {
    for (const PhysTerm& t : terms) {
      switch (t.var) {
        case PhysTerm::Var::U:
          out.emplace_back(row, col_v(t.index), 2.0 * t.coef * V[t.index]);
          break;
        case PhysTerm::Var::K: {
          const Branch& br = net.branches[t.index];
          const int f = net.bus_pos(br.from), to = net.bus_pos(br.to);
          const double c = std::cos(theta[f] - theta[to]), s = std::sin(theta[f] - theta[to]);
          out.emplace_back(row, col_v(f), t.coef * V[to] * c);
          out.emplace_back(row, col_v(to), t.coef * V[f] * c);
          if (int cf = col_t(f); cf >= 0) out.emplace_back(row, cf, -t.coef * V[f] * V[to] * s);
          if (int ct = col_t(to); ct >= 0) out.emplace_back(row, ct, t.coef * V[f] * V[to] * s);
          break;
        }
        case PhysTerm::Var::L: {
          const Branch& br = net.branches[t.index];
          const int f = net.bus_pos(br.from), to = net.bus_pos(br.to);
          const double c = std::cos(theta[f] - theta[to]), s = std::sin(theta[f] - theta[to]);
          out.emplace_back(row, col_v(f), t.coef * V[to] * s);
          out.emplace_back(row, col_v(to), t.coef * V[f] * s);
          if (int cf = col_t(f); cf >= 0) out.emplace_back(row, cf, t.coef * V[f] * V[to] * c);
          if (int ct = col_t(to); ct >= 0) out.emplace_back(row, ct, -t.coef * V[f] * V[to] * c);
          break;
        }
      }
    }
  };

  const int m = static_cast<int>(active.size());
  work.resid.resize(m);
  work.w.resize(m);
  for (int r = 0; r < m; ++r) {
    const Measurement& meas = ms.measurements[active[r]];
    if (meas.kind == MeasurementKind::pmu_angle) {
      if (int c = xlay.col_theta(meas.bus); c >= 0) th.emplace_back(r, c, 1.0);
      work.resid[r] = meas.value - theta[net.bus_pos(meas.bus)];
    } else {
      add_terms(r, meas_terms(net, meas), th);
      work.resid[r] = meas.value - eval_terms(net, meas_terms(net, meas), V, theta);
    }
    work.w[r] = 1.0 / (meas.sigma * meas.sigma);
  }
  work.H.resize(m, xlay.dim());
  work.H.setFromTriplets(th.begin(), th.end());

  const int mc = 2 * static_cast<int>(ms.zero_injections.size());
  work.he.resize(mc);
  int row = 0;
  for (int bus_id : ms.zero_injections)
    for (bool reactive : {false, true}) {
      const auto terms = injection_terms(net, bus_id, reactive);
      add_terms(row, terms, tc);
      work.he[row] = eval_terms(net, terms, V, theta);
      ++row;
    }
  work.Ce.resize(mc, xlay.dim());
  work.Ce.setFromTriplets(tc.begin(), tc.end());
  (void)nb;
}

}  // namespace detail

// Classical Gauss-Newton WLS with the zero-injection constraints carried as
// hard equalities in an augmented (Hachtel-style) system.
inline CentralEstimate gauss_newton_wls(const NetworkCase& net, const MeasurementSet& ms,
                                        int max_iter = 40, double tol = 1e-8,
                                        const std::vector<int>& subset = {},
                                        const VectorXd* v0 = nullptr,
                                        const VectorXd* t0 = nullptr) {
  StateLayout xlay = make_state_layout(net);
  const int nb = net.n_buses();
  std::vector<int> active = subset;
  if (active.empty())
    for (int i = 0; i < ms.size(); ++i) active.push_back(i);

  VectorXd V = v0 ? *v0 : VectorXd::Ones(nb);
  VectorXd theta = t0 ? *t0 : VectorXd::Zero(nb);

  CentralEstimate est;
  detail::WlsWork work;
  for (int it = 0; it < max_iter; ++it) {
    detail::fill_h_rows(net, ms, active, xlay, V, theta, work);
    SpMat Hw = work.w.asDiagonal() * work.H;
    SpMat G = SpMat(work.H.transpose() * Hw);
    const int n = xlay.dim(), mc = static_cast<int>(work.Ce.rows());
    std::vector<Triplet> tk;
    for (int k = 0; k < G.outerSize(); ++k)
      for (SpMat::InnerIterator jt(G, k); jt; ++jt)
        tk.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
    for (int k = 0; k < work.Ce.outerSize(); ++k)
      for (SpMat::InnerIterator jt(work.Ce, k); jt; ++jt) {
        tk.emplace_back(n + static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
        tk.emplace_back(static_cast<int>(jt.col()), n + static_cast<int>(jt.row()), jt.value());
      }
    SpMat KKT(n + mc, n + mc);
    KKT.setFromTriplets(tk.begin(), tk.end());
    Eigen::SparseLU<SpMat> lu;
    lu.compute(KKT);
    if (lu.info() != Eigen::Success) throw ObservabilityError("WLS gain matrix is singular");
    VectorXd rhs(n + mc);
    rhs.head(n) = work.H.transpose() * (work.w.asDiagonal() * work.resid);
    rhs.tail(mc) = -work.he;
    VectorXd dx = lu.solve(rhs).head(n);
    if (!dx.allFinite()) break;

    for (int id : xlay.scope_buses) {
      V[net.bus_pos(id)] += dx[xlay.col_alpha(id)];
      if (int c = xlay.col_theta(id); c >= 0) theta[net.bus_pos(id)] += dx[c];
    }
    ++est.iterations;
    if (dx.lpNorm<Eigen::Infinity>() < tol) {
      est.converged = true;
      break;
    }
    if (dx.lpNorm<Eigen::Infinity>() > 1e3) break;  // diverged
  }
  est.V = V;
  est.theta = theta;
  return est;
}

// WLS plus the largest-normalized-residual test: iteratively removes the
// worst-normalized residual until all fall under the threshold.
inline CentralEstimate wls_lnrt(const NetworkCase& net, const MeasurementSet& ms,
                                double threshold = 3.0, int max_removals = -1) {
  StateLayout xlay = make_state_layout(net);
  std::vector<int> active;
  for (int i = 0; i < ms.size(); ++i) active.push_back(i);
  if (max_removals < 0) max_removals = ms.size() / 3;

  CentralEstimate est;
  VectorXd V, theta;
  for (int round = 0;; ++round) {
    CentralEstimate wls = gauss_newton_wls(net, ms, 40, 1e-8, active,
                                           round == 0 ? nullptr : &V, round == 0 ? nullptr : &theta);
    if (!wls.converged) {
      est.converged = false;
      est.V = wls.V;
      est.theta = wls.theta;
      return est;
    }
    V = wls.V;
    theta = wls.theta;
    est.iterations += wls.iterations;

    detail::WlsWork work;
    detail::fill_h_rows(net, ms, active, xlay, V, theta, work);
    SpMat Hw = work.w.asDiagonal() * work.H;
    SpMat G = SpMat(work.H.transpose() * Hw);
    const int n = xlay.dim(), mc = static_cast<int>(work.Ce.rows());
    std::vector<Triplet> tk;
    for (int k = 0; k < G.outerSize(); ++k)
      for (SpMat::InnerIterator jt(G, k); jt; ++jt)
        tk.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
    for (int k = 0; k < work.Ce.outerSize(); ++k)
      for (SpMat::InnerIterator jt(work.Ce, k); jt; ++jt) {
        tk.emplace_back(n + static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
        tk.emplace_back(static_cast<int>(jt.col()), n + static_cast<int>(jt.row()), jt.value());
      }
    SpMat KKT(n + mc, n + mc);
    KKT.setFromTriplets(tk.begin(), tk.end());
    Eigen::SparseLU<SpMat> lu;
    lu.compute(KKT);
    if (lu.info() != Eigen::Success) {
      std::string last = est.removed_measurements.empty()
                             ? "none"
                             : ms.measurements[est.removed_measurements.back()].describe(net);
      throw ObservabilityError("measurement removal broke observability (last removal: " + last +
                               ")");
    }
    // state covariance = (1,1) block of the KKT inverse
    Eigen::MatrixXd T(n, n);
    VectorXd e = VectorXd::Zero(n + mc);
    for (int k = 0; k < n; ++k) {
      e[k] = 1.0;
      T.col(k) = lu.solve(e).head(n);
      e[k] = 0.0;
    }

    int worst = -1;
    double worst_rn = threshold;
    for (int r = 0; r < static_cast<int>(active.size()); ++r) {
      VectorXd h_r = work.H.row(r).transpose();
      const double omega = 1.0 / work.w[r] - h_r.dot(T * h_r);
      if (omega < 1e-10) continue;  // critical measurement, not testable
      const double rn = std::abs(work.resid[r]) / std::sqrt(omega);
      if (rn > worst_rn) {
        worst_rn = rn;
        worst = r;
      }
    }
    if (worst < 0 || static_cast<int>(est.removed_measurements.size()) >= max_removals) break;
    est.removed_measurements.push_back(active[worst]);
    active.erase(active.begin() + worst);
  }
  est.V = V;
  est.theta = theta;
  est.converged = true;
  return est;
}

}  // namespace drbse
