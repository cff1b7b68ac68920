#ifndef CTDD_SAMPLER_HPP
#define CTDD_SAMPLER_HPP

#include <functional>
#include <map>
#include <vector>

#include "ctdd/denoiser.hpp"
#include "ctdd/enumerable.hpp"
#include "ctdd/forward_process.hpp"
#include "ctdd/reverse_rates.hpp"

namespace ctdd {

enum class ExecutionPolicy { Serial, Parallel };

// Exact forward simulation via time rescaling u = B(t): under u the chain is
// homogeneous with generator R_b.
struct Trajectory {
  std::vector<double> times;   // jump times, ascending
  std::vector<State> states;   // state after each jump; states[0] at time 0
  const State& terminal() const { return states.back(); }
  long jump_count() const { return static_cast<long>(times.size()) - 1; }
};
Trajectory gillespie_forward(const ForwardProcess& fp, const State& x0, double t_end, Rng& rng);

struct TauLeapConfig {
  double tau = 0.01;
  double epsilon = 0.01;             // terminal cutoff (0.01 T by default)
  int corrector_count = 0;           // corrector sweeps per predictor step
  double corrector_entry = 0.1;      // threshold as a fraction of T
  bool corrector_active_below = true;
  double corrector_step_scale = 1.5; // corrector leap size = scale * tau
  bool reject_multi_jump = false;    // true for categorical data
  void validate(double T) const;
};

struct StepStats {
  double t = 0.0;             // time after the predictor leap
  double jump_frac = 0.0;     // dimensions that changed value
  double reject_frac = 0.0;   // dimensions rejected (categorical)
  double clamp_frac = 0.0;    // dimensions clamped (ordinal out of bounds)
  long denoiser_calls = 0;    // per chain: 1 + active corrector sweeps
};

struct SampleStats {
  std::vector<StepStats> steps;
  long denoiser_calls_per_chain = 0;  // predictor + corrector calls (NFE)
};

struct UpdateOutcome {
  int jumped = 0;
  int rejected = 0;
  int clamped = 0;
};

// Applies Poisson counts P(d, s) simultaneously: ordinal dimensions move by
// sum_s P(d,s) (s - x^d) then clamp to [0, S-1]; categorical dimensions are
// rejected entirely when more than one jump was proposed.
UpdateOutcome apply_tau_leap_update(State& x, const Eigen::MatrixXi& counts,
                                    bool reject_multi_jump, int S,
                                    const ConditioningMask& mask = {});

struct TauLeapResult {
  std::vector<State> samples;  // after the final argmax denoise at epsilon
  SampleStats stats;
};

// Batch reverse simulation from x_T ~ p_ref down to epsilon, then a final
// argmax denoise.  Chain c draws only from its own RNG stream (seed, c), so
// serial and parallel execution produce identical output.
TauLeapResult tau_leap_reverse(const Denoiser& den, const ForwardProcess& fp,
                               const TauLeapConfig& cfg, int num_chains, uint64_t seed,
                               ExecutionPolicy policy = ExecutionPolicy::Parallel,
                               const ConditioningMask& mask = {},
                               const std::vector<State>* conditioning = nullptr);

// Per-dimension argmax of the denoiser output at t = epsilon; ties break
// toward the smallest state index.
State final_denoise(const State& x_eps, const Denoiser& den, double epsilon,
                    const ConditioningMask& mask = {});

using RateFn = std::function<ReverseRateTable(const State&, double)>;

struct NextReactionResult {
  std::vector<State> samples;         // terminal states at epsilon (not denoised)
  long rate_evals_per_chain = 0;      // grid evaluations for the first chain
};

// Statistically exact reverse simulation with the next-reaction method for
// time-dependent rates.  Rates are integrated on an Euler grid of the given
// step; they are refreshed at every grid cell and after every firing.
NextReactionResult next_reaction_reverse(const RateFn& rate_fn, const ForwardProcess& fp,
                                         double epsilon, double euler_step, int num_chains,
                                         uint64_t seed, double rate_cap = 1e12,
                                         ExecutionPolicy policy = ExecutionPolicy::Parallel,
                                         const ConditioningMask& mask = {},
                                         const std::vector<State>* conditioning = nullptr);

// Rate functions with a precomputed qt0 grid shared across chains.  prepare()
// must cover every time the driver will request; unknown times fall back to a
// direct computation.
class CachedModelRates {
 public:
  CachedModelRates(const Denoiser& den, const ForwardProcess& fp);
  void prepare(double t_top, double epsilon, double step);
  ReverseRateTable operator()(const State& x, double t) const;

 private:
  const Denoiser* den_;
  const ForwardProcess* fp_;
  std::map<double, std::pair<Eigen::MatrixXd, double>> grid_;  // t -> (qt0, beta)
};

class CachedExactRates {
 public:
  CachedExactRates(EnumerableDistribution p_data, const ForwardProcess& fp);
  void prepare(double t_top, double epsilon, double step);
  ReverseRateTable operator()(const State& x, double t) const;

 private:
  EnumerableDistribution p_data_;
  const ForwardProcess* fp_;
  std::map<double, std::pair<Eigen::MatrixXd, double>> grid_;
};

// Read-only adapter selecting the EMA shadow parameters of an MLP denoiser.
class MlpDenoiser;
class EmaDenoiserView : public Denoiser {
 public:
  explicit EmaDenoiserView(const MlpDenoiser& mlp) : mlp_(&mlp) {}
  DenoiserOutput evaluate(const State& x, double t) const override;

 private:
  const MlpDenoiser* mlp_;
};

}  // namespace ctdd

#endif
