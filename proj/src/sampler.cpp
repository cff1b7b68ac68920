#include "ctdd/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "ctdd/mlp_denoiser.hpp"

namespace ctdd {

namespace {
constexpr uint64_t kChainStreamTag = 0x54414C45;  // tau-leap chains
constexpr uint64_t kNrStreamTag = 0x4e455854;     // next-reaction chains
constexpr uint64_t kGillespieTag = 0x47494C4C;

long poisson_draw(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<long> dist(mean);
  return dist(rng);
}

double exp_draw(Rng& rng) {
  std::uniform_real_distribution<double> unit(std::numeric_limits<double>::min(), 1.0);
  return -std::log(unit(rng));
}
}  // namespace

Trajectory gillespie_forward(const ForwardProcess& fp, const State& x0, double t_end, Rng& rng) {
  if (t_end > fp.horizon() * (1.0 + 1e-12))
    throw std::invalid_argument("gillespie: t_end beyond horizon");
  const BaseRateMatrix& rb = fp.rate();
  const int S = fp.space().S;
  const int D = fp.space().D;
  const double u_end = fp.schedule().integral(t_end);

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);

  State x = x0;
  double u = 0.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (true) {
    double z = 0.0;
    for (int d = 0; d < D; ++d) z -= rb(x[d], x[d]);
    if (!(z > 0.0)) break;  // absorbed
    u += exp_draw(rng) / z;
    if (u >= u_end) break;
    // pick (d, s) proportional to R_b(x^d, s)
    double pick = unit(rng) * z;
    int jd = D - 1, js = x[D - 1] > 0 ? 0 : 1;
    bool found = false;
    for (int d = 0; d < D && !found; ++d) {
      for (int s = 0; s < S; ++s) {
        if (s == x[d]) continue;
        const double r = rb(x[d], s);
        if (r <= 0.0) continue;
        pick -= r;
        jd = d;
        js = s;
        if (pick <= 0.0) {
          found = true;
          break;
        }
      }
    }
    x[jd] = js;
    traj.times.push_back(fp.schedule().inverse_integral(u));
    traj.states.push_back(x);
  }
  return traj;
}

void TauLeapConfig::validate(double T) const {
  if (!(tau > 0.0) || tau > T - epsilon + 1e-12)
    throw std::invalid_argument("tau-leap config: need 0 < tau <= T - epsilon");
  if (!(epsilon > 0.0) || epsilon >= T)
    throw std::invalid_argument("tau-leap config: need 0 < epsilon < T");
  if (corrector_count < 0) throw std::invalid_argument("tau-leap config: corrector count < 0");
  if (!(corrector_step_scale > 0.0))
    throw std::invalid_argument("tau-leap config: corrector step scale must be positive");
}

UpdateOutcome apply_tau_leap_update(State& x, const Eigen::MatrixXi& counts,
                                    bool reject_multi_jump, int S, const ConditioningMask& mask) {
  UpdateOutcome outcome;
  const int D = static_cast<int>(x.size());
  for (int d = 0; d < D; ++d) {
    if (mask.conditioned(d)) continue;
    long total = 0;
    for (int s = 0; s < S; ++s)
      if (s != x[d]) total += counts(d, s);
    if (total == 0) continue;
    if (reject_multi_jump) {
      if (total > 1) {
        ++outcome.rejected;
        continue;
      }
      for (int s = 0; s < S; ++s) {
        if (s != x[d] && counts(d, s) > 0) {
          x[d] = s;
          break;
        }
      }
      ++outcome.jumped;
    } else {
      long next = x[d];
      for (int s = 0; s < S; ++s)
        if (s != x[d]) next += static_cast<long>(counts(d, s)) * (s - x[d]);
      if (next < 0 || next >= S) {
        next = next < 0 ? 0 : S - 1;
        ++outcome.clamped;
      }
      if (next != x[d]) ++outcome.jumped;
      x[d] = static_cast<int>(next);
    }
  }
  return outcome;
}

namespace {

// one chain step: rates -> Poisson counts -> simultaneous update
UpdateOutcome leap_once(State& x, const ReverseRateTable& table, double step, bool reject_multi,
                        int S, const ConditioningMask& mask, Rng& rng) {
  const int D = static_cast<int>(x.size());
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(D, S);
  for (int d = 0; d < D; ++d) {
    if (mask.conditioned(d)) continue;
    for (int s = 0; s < S; ++s) {
      if (s == x[d]) continue;
      const double rate = table.rates(d, s);
      if (!std::isfinite(rate)) throw std::runtime_error("diverged simulation: non-finite rate");
      counts(d, s) = static_cast<int>(poisson_draw(step * rate, rng));
    }
  }
  return apply_tau_leap_update(x, counts, reject_multi, S, mask);
}

}  // namespace

TauLeapResult tau_leap_reverse(const Denoiser& den, const ForwardProcess& fp,
                               const TauLeapConfig& cfg, int num_chains, uint64_t seed,
                               ExecutionPolicy policy, const ConditioningMask& mask,
                               const std::vector<State>* conditioning) {
  const double T = fp.horizon();
  cfg.validate(T);
  if (num_chains < 1) throw std::invalid_argument("tau-leap: need at least one chain");
  if (mask.prefix > 0 && (conditioning == nullptr || conditioning->empty()))
    throw std::invalid_argument("tau-leap: conditioning mask without conditioning states");

  const int D = fp.space().D;
  const int S = fp.space().S;
  const bool parallel = policy == ExecutionPolicy::Parallel;

  std::vector<State> chains(num_chains);
  std::vector<Rng> streams;
  streams.reserve(num_chains);
  for (int c = 0; c < num_chains; ++c) {
    streams.push_back(make_stream(seed ^ kChainStreamTag, static_cast<uint64_t>(c)));
    chains[c] = fp.sample_stationary(streams[c]);
    if (mask.prefix > 0) {
      const State& cond = (*conditioning)[c % conditioning->size()];
      for (int d = 0; d < mask.prefix; ++d) chains[c][d] = cond[d];
    }
  }

  TauLeapResult result;
  std::vector<UpdateOutcome> outcomes(num_chains);

  double t = T;
  long nfe = 0;
  while (t > cfg.epsilon + 1e-12) {
    const double tau_eff = std::min(cfg.tau, t - cfg.epsilon);
    const double t_next = t - tau_eff;
    const Eigen::MatrixXd qt = fp.qt0(t);
    const double beta = fp.schedule().beta(t);

    const bool corrector_active =
        cfg.corrector_count > 0 && (cfg.corrector_active_below ? t_next < cfg.corrector_entry * T
                                                               : t_next > cfg.corrector_entry * T);

    std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (parallel)
    for (int c = 0; c < num_chains; ++c) {
      try {
        const DenoiserOutput out = den.evaluate_shared(chains[c], t, qt);
        const ReverseRateTable table = model_reverse_rates_with(chains[c], qt, beta, out, fp);
        outcomes[c] = leap_once(chains[c], table, tau_eff, cfg.reject_multi_jump, S, mask,
                                streams[c]);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    StepStats row;
    row.t = t_next;
    row.denoiser_calls = 1;
    for (int c = 0; c < num_chains; ++c) {
      row.jump_frac += outcomes[c].jumped;
      row.reject_frac += outcomes[c].rejected;
      row.clamp_frac += outcomes[c].clamped;
    }

    if (corrector_active) {
      const Eigen::MatrixXd qt_c = fp.qt0(t_next);
      const double beta_c = fp.schedule().beta(t_next);
      const double corrector_step = cfg.tau * cfg.corrector_step_scale;
      for (int sweep = 0; sweep < cfg.corrector_count; ++sweep) {
        std::exception_ptr sweep_failure;
#pragma omp parallel for schedule(static) if (parallel)
        for (int c = 0; c < num_chains; ++c) {
          try {
            const DenoiserOutput out = den.evaluate_shared(chains[c], t_next, qt_c);
            const ReverseRateTable table =
                corrector_rates_with(chains[c], qt_c, beta_c, out, fp);
            outcomes[c] = leap_once(chains[c], table, corrector_step, cfg.reject_multi_jump, S,
                                    mask, streams[c]);
          } catch (...) {
#pragma omp critical
            if (!sweep_failure) sweep_failure = std::current_exception();
          }
        }
        if (sweep_failure) std::rethrow_exception(sweep_failure);
        for (int c = 0; c < num_chains; ++c) {
          row.jump_frac += outcomes[c].jumped;
          row.reject_frac += outcomes[c].rejected;
          row.clamp_frac += outcomes[c].clamped;
        }
        row.denoiser_calls += 1;
      }
    }

    const double denom = static_cast<double>(num_chains) *
                         std::max(1, D - mask.prefix) * row.denoiser_calls;
    row.jump_frac /= denom;
    row.reject_frac /= denom;
    row.clamp_frac /= denom;
    nfe += row.denoiser_calls;
    result.stats.steps.push_back(row);
    t = t_next;
  }
  result.stats.denoiser_calls_per_chain = nfe;

  result.samples.assign(num_chains, State());
  const Eigen::MatrixXd qt_eps = fp.qt0(cfg.epsilon);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < num_chains; ++c) {
    try {
      const DenoiserOutput out = den.evaluate_shared(chains[c], cfg.epsilon, qt_eps);
      State clean = chains[c];
      for (int d = 0; d < D; ++d) {
        if (mask.conditioned(d)) continue;
        int best = 0;
        for (int s = 1; s < S; ++s)
          if (out.probs(d, s) > out.probs(d, best)) best = s;
        clean[d] = best;
      }
      result.samples[c] = clean;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

State final_denoise(const State& x_eps, const Denoiser& den, double epsilon,
                    const ConditioningMask& mask) {
  const DenoiserOutput out = den.evaluate(x_eps, epsilon);
  State clean = x_eps;
  for (int d = 0; d < static_cast<int>(x_eps.size()); ++d) {
    if (mask.conditioned(d)) continue;
    int best = 0;
    for (int s = 1; s < out.probs.cols(); ++s)
      if (out.probs(d, s) > out.probs(d, best)) best = s;
    clean[d] = best;
  }
  return clean;
}

NextReactionResult next_reaction_reverse(const RateFn& rate_fn, const ForwardProcess& fp,
                                         double epsilon, double euler_step, int num_chains,
                                         uint64_t seed, double rate_cap, ExecutionPolicy policy,
                                         const ConditioningMask& mask,
                                         const std::vector<State>* conditioning) {
  const double T = fp.horizon();
  if (!(epsilon > 0.0) || epsilon >= T)
    throw std::invalid_argument("next-reaction: need 0 < epsilon < T");
  if (!(euler_step > 0.0)) throw std::invalid_argument("next-reaction: bad euler step");
  if (mask.prefix > 0 && (conditioning == nullptr || conditioning->empty()))
    throw std::invalid_argument("next-reaction: conditioning mask without conditioning states");

  const int D = fp.space().D;
  const int S = fp.space().S;
  const bool parallel = policy == ExecutionPolicy::Parallel;
  const long cells = static_cast<long>(std::ceil((T - epsilon) / euler_step - 1e-12));

  NextReactionResult result;
  result.samples.assign(num_chains, State());
  std::vector<long> evals(num_chains, 0);

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int c = 0; c < num_chains; ++c) {
    try {
    Rng rng = make_stream(seed ^ kNrStreamTag, static_cast<uint64_t>(c));
    State x = fp.sample_stationary(rng);
    if (mask.prefix > 0) {
      const State& cond = (*conditioning)[c % conditioning->size()];
      for (int d = 0; d < mask.prefix; ++d) x[d] = cond[d];
    }

    const int channels = D * S;
    std::vector<double> consumed(channels, 0.0);   // internal time T_k
    std::vector<double> threshold(channels, 0.0);  // next firing level P_k
    for (int k = 0; k < channels; ++k) threshold[k] = exp_draw(rng);

    auto fetch = [&](double t_cell) {
      ReverseRateTable table = rate_fn(x, t_cell);
      ++evals[c];
      const double top = table.rates.maxCoeff();
      if (!std::isfinite(top) || top > rate_cap)
        throw std::runtime_error("diverged simulation: reverse rate exceeded cap");
      return table;
    };

    for (long cell = 0; cell < cells; ++cell) {
      const double t_cell = T - static_cast<double>(cell) * euler_step;
      double remaining = std::min(euler_step, t_cell - epsilon);
      ReverseRateTable table = fetch(t_cell);
      while (remaining > 0.0) {
        // earliest channel to reach its threshold at frozen rates
        double best_dt = std::numeric_limits<double>::infinity();
        int best_k = -1;
        for (int d = 0; d < D; ++d) {
          if (mask.conditioned(d)) continue;
          for (int s = 0; s < S; ++s) {
            const double rate = table.rates(d, s);
            if (rate <= 0.0) continue;
            const int k = d * S + s;
            const double dt = (threshold[k] - consumed[k]) / rate;
            if (dt < best_dt) {
              best_dt = dt;
              best_k = k;
            }
          }
        }
        if (best_k < 0 || best_dt > remaining) {
          for (int d = 0; d < D; ++d)
            for (int s = 0; s < S; ++s) {
              const int k = d * S + s;
              consumed[k] += table.rates(d, s) * remaining;
            }
          break;
        }
        for (int d = 0; d < D; ++d)
          for (int s = 0; s < S; ++s) {
            const int k = d * S + s;
            consumed[k] += table.rates(d, s) * best_dt;
          }
        remaining -= best_dt;
        x[best_k / S] = best_k % S;
        threshold[best_k] += exp_draw(rng);
        table = fetch(t_cell);
      }
    }
    result.samples[c] = x;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  result.rate_evals_per_chain = num_chains > 0 ? evals[0] : 0;
  return result;
}

CachedModelRates::CachedModelRates(const Denoiser& den, const ForwardProcess& fp)
    : den_(&den), fp_(&fp) {}

void CachedModelRates::prepare(double t_top, double epsilon, double step) {
  const long cells = static_cast<long>(std::ceil((t_top - epsilon) / step - 1e-12));
  for (long k = 0; k <= cells; ++k) {
    const double t = t_top - static_cast<double>(k) * step;
    if (t < epsilon - 1e-12) break;
    grid_.emplace(t, std::make_pair(fp_->qt0(t), fp_->schedule().beta(t)));
  }
}

ReverseRateTable CachedModelRates::operator()(const State& x, double t) const {
  const auto it = grid_.find(t);
  if (it == grid_.end()) {
    const DenoiserOutput out = den_->evaluate(x, t);
    return model_reverse_rates_with(x, fp_->qt0(t), fp_->schedule().beta(t), out, *fp_);
  }
  const DenoiserOutput out = den_->evaluate_shared(x, t, it->second.first);
  return model_reverse_rates_with(x, it->second.first, it->second.second, out, *fp_);
}

CachedExactRates::CachedExactRates(EnumerableDistribution p_data, const ForwardProcess& fp)
    : p_data_(std::move(p_data)), fp_(&fp) {}

void CachedExactRates::prepare(double t_top, double epsilon, double step) {
  const long cells = static_cast<long>(std::ceil((t_top - epsilon) / step - 1e-12));
  for (long k = 0; k <= cells; ++k) {
    const double t = t_top - static_cast<double>(k) * step;
    if (t < epsilon - 1e-12) break;
    grid_.emplace(t, std::make_pair(fp_->qt0(t), fp_->schedule().beta(t)));
  }
}

ReverseRateTable CachedExactRates::operator()(const State& x, double t) const {
  const auto it = grid_.find(t);
  const Eigen::MatrixXd qt = it == grid_.end() ? fp_->qt0(t) : it->second.first;
  const double beta = it == grid_.end() ? fp_->schedule().beta(t) : it->second.second;

  const int D = fp_->space().D;
  const int S = fp_->space().S;
  const BaseRateMatrix& rb = fp_->rate();
  const double qx = p_data_.marginal_of(x, qt);
  if (!(qx > 0.0)) throw std::runtime_error("undefined reverse rate: q_t(x) = 0");

  ReverseRateTable table;
  table.rates = Eigen::MatrixXd::Zero(D, S);
  State y = x;
  for (int d = 0; d < D; ++d) {
    for (int s = 0; s < S; ++s) {
      if (s == x[d]) continue;
      const double base = rb(s, x[d]);
      if (base <= 0.0) continue;
      y[d] = s;
      table.rates(d, s) = beta * base * p_data_.marginal_of(y, qt) / qx;
    }
    y[d] = x[d];
  }
  return table;
}

DenoiserOutput EmaDenoiserView::evaluate(const State& x, double t) const {
  return mlp_->evaluate_ema(x, t);
}

}  // namespace ctdd
