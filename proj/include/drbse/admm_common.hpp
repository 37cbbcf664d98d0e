#pragma once

#include <memory>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "drbse/bilinear.hpp"
#include "drbse/errors.hpp"

namespace drbse {

struct SolverParams {
  double lambda = 1.34;
  double rho_f = 1.0;
  double rho_s = 0.1;
  double epsilon = 5e-4;
  int max_iter = 500;
  // Threshold scale for second-stage residual rows: the transformed
  // "measurements" u carry the first stage's estimation accuracy, not a meter
  // sigma, so their shrinkage dead zone is lambda times this scale. It should
  // sit near the stage-1 handoff accuracy (the consensus tolerance is a good
  // proxy); a meter-sized scale would leave gross stage-1 errors inside the
  // dead zone across area cuts.
  double sigma_u = 5e-4;
  RowScaling scaling = RowScaling::relative_sigma;
  // Literal reading of the augmented gain (rho added on every diagonal entry)
  // versus augmentation restricted to consensus slots. The restricted form is
  // the exact consensus splitting; the literal form adds a small bias pulling
  // non-shared variables toward zero.
  bool full_identity_augmentation = false;
};

// Cached solver for min 0.5 y'G y - c'y subject to E y = z_e, with G
// factorized once and the constraint block folded in via the Schur
// complement: y = G^-1 c - W S^-1 (E G^-1 c - z_e), W = G^-1 E'.
class GainSolver {
 public:
  void init(const SpMat& G, const SpMat& E, const VectorXd& z_e) {
    ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>();
    ldlt_->compute(G);
    if (ldlt_->info() != Eigen::Success)
      throw NumericalError("augmented gain factorization failed (rank-deficient scope?)");
    E_ = E;
    z_e_ = z_e;
    if (E.rows() > 0) {
      Eigen::MatrixXd Et = Eigen::MatrixXd(E).transpose();
      W_ = ldlt_->solve(Et);
      Eigen::MatrixXd EW = E * W_;
      schur_.compute(EW);
      if (schur_.info() != Eigen::Success)
        throw NumericalError("equality-constraint Schur complement is singular");
    }
  }

  bool has_constraints() const { return E_.rows() > 0; }

  VectorXd solve(const VectorXd& c) const {
    VectorXd y = ldlt_->solve(c);
    if (E_.rows() > 0) {
      y -= W_ * schur_.solve(E_ * y - z_e_);
      y -= W_ * schur_.solve(E_ * y - z_e_);  // one refinement pass
    }
    return y;
  }

 private:
  std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
  SpMat E_;
  VectorXd z_e_;
  Eigen::MatrixXd W_;
  Eigen::LLT<Eigen::MatrixXd> schur_;
};

// G = M'M + rho on the given diagonal slots (all slots when full identity).
inline SpMat augmented_gain(const SpMat& M, double rho, const std::vector<int>& consensus_slots,
                            bool full_identity) {
  SpMat G = SpMat(M.transpose() * M);
  const int n = static_cast<int>(M.cols());
  SpMat D(n, n);
  std::vector<Triplet> td;
  if (full_identity) {
    for (int i = 0; i < n; ++i) td.emplace_back(i, i, rho);
  } else {
    for (int i : consensus_slots) td.emplace_back(i, i, rho);
  }
  D.setFromTriplets(td.begin(), td.end());
  return SpMat(G + D);
}

}  // namespace drbse
