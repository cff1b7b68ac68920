#ifndef CTDD_FORWARD_PROCESS_HPP
#define CTDD_FORWARD_PROCESS_HPP

#include <Eigen/Dense>
#include <vector>

#include "ctdd/rate_matrix.hpp"
#include "ctdd/rng.hpp"
#include "ctdd/schedule.hpp"

namespace ctdd {

using State = std::vector<int>;

// Dimensions below `prefix` are conditioning inputs: they are never noised,
// never jump, and contribute no outward rate.
struct ConditioningMask {
  int prefix = 0;
  bool conditioned(int d) const { return d < prefix; }
};

// The forward noising CTMC with analytic marginals
//   q_{t|0} = Q exp(Lambda B(t)) Q^-1,
// shared across all D dimensions.  Immutable after construction; sampling
// takes an explicit RNG stream.
class ForwardProcess {
 public:
  ForwardProcess(StateSpace space, BaseRateMatrix rate, BetaSchedule schedule, double horizon = 1.0);

  // Row-stochastic S x S matrix, row i = q_{t|0}(. | x_0 = i).  Tiny negative
  // entries from the spectral reconstruction (>= -1e-10) are clipped to zero
  // and rows renormalized; anything below -1e-10 throws.
  Eigen::MatrixXd qt0(double t) const;

  // q_{t|s} for t >= s, via exp(Lambda (B(t) - B(s))).
  Eigen::MatrixXd transition(double s, double t) const;

  State sample_forward(const State& x0, double t, Rng& rng,
                       const ConditioningMask& mask = {}) const;

  // Z^t(x) = beta(t) sum_d -R_b(x^d, x^d) over unconditioned dimensions.
  double z_total(const State& x, double t, const ConditioningMask& mask = {}) const;

  struct Jump {
    int dim = -1;
    int state = -1;
  };

  // Probabilities beta(t) R_b(x^d, s) / Z^t(x) over (d, s != x^d); zero rows
  // for conditioned dimensions.  Throws if Z = 0 (fully absorbed state).
  Eigen::MatrixXd jump_distribution(const State& x, double t,
                                    const ConditioningMask& mask = {}) const;
  Jump sample_jump(const State& x, double t, Rng& rng,
                   const ConditioningMask& mask = {}) const;

  struct PsiDraw {
    State intermediate;  // x ~ q_{t|0}(. | x0)
    State jumped;        // x-tilde, one jump applied
    Jump jump;
  };
  // Draw from psi_t(x-tilde | x0), keeping the intermediate state for the
  // two-pass objective.
  PsiDraw psi_sample(const State& x0, double t, Rng& rng,
                     const ConditioningMask& mask = {}) const;

  // phi_t(s | x-tilde, x0): D x S table of probabilities over single-dimension
  // replacements (d, s != x-tilde^d), normalized to 1.  The shared
  // per-dimension factors of the joint marginal cancel in the normalization,
  // so only per-dimension ratios enter; the beta(t) scaling cancels too, so
  // the qt-based overload needs no time.
  Eigen::MatrixXd phi_weights(const State& xt, const State& x0, const Eigen::MatrixXd& qt,
                              const ConditioningMask& mask = {}) const;
  Eigen::MatrixXd phi_weights(const State& xt, const State& x0, double t,
                              const ConditioningMask& mask = {}) const;

  const StateSpace& space() const { return space_; }
  const BaseRateMatrix& rate() const { return rate_; }
  const SpectralDecomposition& spectral() const { return spectral_; }
  const BetaSchedule& schedule() const { return schedule_; }
  double horizon() const { return horizon_; }
  const Eigen::VectorXd& stationary() const { return rate_.stationary(); }

  State sample_stationary(Rng& rng) const;

 private:
  void check_time(double t) const;
  void check_state(const State& x) const;

  StateSpace space_;
  BaseRateMatrix rate_;
  SpectralDecomposition spectral_;
  BetaSchedule schedule_;
  double horizon_;
};

}  // namespace ctdd

#endif
