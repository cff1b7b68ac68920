#ifndef CTDD_OBJECTIVE_HPP
#define CTDD_OBJECTIVE_HPP

#include <functional>
#include <vector>

#include "ctdd/quadrature.hpp"

#include "ctdd/denoiser.hpp"
#include "ctdd/enumerable.hpp"
#include "ctdd/forward_process.hpp"
#include "ctdd/parameters.hpp"

namespace ctdd {

// two_pass evaluates the denoiser at the noised state for the outward-rate
// term and at the jumped state for the log-rate term; one_pass anchors both
// at the jumped state so each batch element costs one forward pass.
enum class CtVariant { TwoPass, OnePass };

struct LossReport {
  double total = 0.0;
  double ct_term1 = 0.0;  // outward-rate term
  double ct_term2 = 0.0;  // negative log-rate term
  double aux_ll = 0.0;    // direct denoising negative log-likelihood
  double lambda = 0.0;
  void combine();  // total = ct_term1 + ct_term2 + lambda * aux_ll
};

struct ObjectiveOptions {
  CtVariant variant = CtVariant::OnePass;
  double lambda_aux = 0.0;
  double epsilon = 0.01;  // times are drawn from U(epsilon, T)
  ConditioningMask mask;
};

// Monte Carlo estimate over a freshly drawn batch.  Element i of step k uses
// the RNG stream (seed, k, i), so results do not depend on thread count.
LossReport loss_mc_value(const EnumerableDistribution& data, const Denoiser& den,
                         const ForwardProcess& fp, const ObjectiveOptions& opts, int batch,
                         uint64_t seed, long step);
LossReport loss_mc_grad(const EnumerableDistribution& data, TrainableDenoiser& den,
                        const ForwardProcess& fp, const ObjectiveOptions& opts, int batch,
                        uint64_t seed, long step, Eigen::VectorXd& grad, bool parallel);

// Exhaustive expectation: all sums replace Monte Carlo, times integrated with
// Gauss-Legendre quadrature on [t_lo, t_hi] (or caller-supplied nodes, e.g.
// bin midpoints aligned with a tabular denoiser).  Values (and gradients) are
// deterministic.  Conditioning is not supported here.
struct ExhaustiveSpec {
  int quad_order = 48;
  double t_lo = 0.01;
  double t_hi = 1.0;
  std::vector<QuadratureNode> nodes;  // overrides quad_order when set
};
LossReport loss_exhaustive_value(const EnumerableDistribution& data, const Denoiser& den,
                                 const ForwardProcess& fp, const ObjectiveOptions& opts,
                                 const ExhaustiveSpec& spec);
LossReport loss_exhaustive_grad(const EnumerableDistribution& data, TrainableDenoiser& den,
                                const ForwardProcess& fp, const ObjectiveOptions& opts,
                                const ExhaustiveSpec& spec, Eigen::VectorXd& grad);

// Discrete-time ELBO oracle on a uniform K-step grid, exhaustively evaluated
// on a tiny chain.  Returns the theta-dependent part anchored at the exact
// posterior denoiser: value(theta) - value(oracle), so the intractable
// additive constants cancel and the K -> infinity limit can be compared
// against the continuous-time objective anchored the same way.
struct DtElboParts {
  double reconstruction_gap = 0.0;  // k = 0 term
  double kl_sum_gap = 0.0;          // k = 1..K-1 terms
  double value() const { return reconstruction_gap + kl_sum_gap; }
};
DtElboParts loss_dt_exact(const EnumerableDistribution& data, const ForwardProcess& fp,
                          const Denoiser& den, int K);

struct TrainOptions {
  long steps = 1000;
  int batch_size = 32;
  double lr = 1e-4;
  double lambda_aux = 0.0;
  long warmup_steps = 5000;
  double clip_norm = 1.0;
  double ema_decay = 0.9999;
  uint64_t seed = 0;
  CtVariant variant = CtVariant::OnePass;
  double epsilon = 0.01;
  ConditioningMask mask;
  bool parallel = true;
  int log_every = 100;
};

struct TrainHooks {
  std::function<void(long step, const LossReport&, double grad_norm)> on_log;
  std::function<void(long step)> on_step_end;  // checkpointing etc.
};

class AdamOptimizer;

// Runs `opts.steps` optimizer steps from the optimizer's current position.
// Deterministic for a fixed seed; throws on a non-finite loss.
void train_loop(const EnumerableDistribution& data, TrainableDenoiser& den,
                const ForwardProcess& fp, const TrainOptions& opts, AdamOptimizer& optimizer,
                const TrainHooks& hooks = {});

}  // namespace ctdd

#endif
