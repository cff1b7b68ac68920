#include "ctdd/objective.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ctdd/quadrature.hpp"
#include "ctdd/reverse_rates.hpp"

namespace ctdd {

namespace {

constexpr double kDenomFloor = 1e-35;

// Streams are namespaced so training, sampling and tests never collide.
constexpr uint64_t kTrainStreamTag = 0x7261494e;

// sum over unconditioned (d, s != y^d) of the model reverse rate out of y;
// optionally accumulates w * d(term1)/d(probs).
double term1_at(const State& y, const DenoiserOutput& out, const Eigen::MatrixXd& qt, double beta,
                const ForwardProcess& fp, const ConditioningMask& mask, double w,
                Eigen::MatrixXd* dprobs) {
  const int D = fp.space().D;
  const int S = fp.space().S;
  const BaseRateMatrix& rb = fp.rate();
  double total = 0.0;
  for (int d = 0; d < D; ++d) {
    if (mask.conditioned(d)) continue;
    const int yd = y[d];
    for (int s = 0; s < S; ++s) {
      if (s == yd) continue;
      const double base = rb(s, yd);
      if (base <= 0.0) continue;
      double acc = 0.0;
      for (int v = 0; v < S; ++v) {
        const double ratio = qt(v, s) / std::max(qt(v, yd), kDenomFloor);
        acc += out.probs(d, v) * ratio;
        if (dprobs) (*dprobs)(d, v) += w * beta * base * ratio;
      }
      total += beta * base * acc;
    }
  }
  return total;
}

// phi-weighted log-rate term anchored at the jumped state xt:
//   sum over (d, s != xt^d) of phi(d,s) Z(xt with d -> s) log R-hat_d(xt, s),
// negated.  Optionally accumulates w * d(term2)/d(probs).
double term2_at(const State& xt, const State& x0, const DenoiserOutput& out,
                const Eigen::MatrixXd& qt, double beta, const ForwardProcess& fp,
                const ConditioningMask& mask, double w, Eigen::MatrixXd* dprobs) {
  const int D = fp.space().D;
  const int S = fp.space().S;
  const BaseRateMatrix& rb = fp.rate();

  const Eigen::MatrixXd phi = fp.phi_weights(xt, x0, qt, mask);

  double out_rate = 0.0;
  for (int d = 0; d < D; ++d)
    if (!mask.conditioned(d)) out_rate -= rb(xt[d], xt[d]);

  double total = 0.0;
  for (int d = 0; d < D; ++d) {
    if (mask.conditioned(d)) continue;
    const int xd = xt[d];
    for (int s = 0; s < S; ++s) {
      if (s == xd || phi(d, s) <= 0.0) continue;
      const double base = rb(s, xd);
      double rate = 0.0;
      for (int v = 0; v < S; ++v)
        rate += out.probs(d, v) * qt(v, s) / std::max(qt(v, xd), kDenomFloor);
      rate *= beta * base;
      if (!(rate > 0.0))
        throw std::runtime_error("ill-conditioned objective: log of zero reverse rate");
      const double z_sub = beta * (out_rate - rb(s, s) + rb(xd, xd));
      const double coeff = phi(d, s) * z_sub;
      total -= coeff * std::log(rate);
      if (dprobs) {
        const double scale = -w * coeff / rate * beta * base;
        for (int v = 0; v < S; ++v)
          (*dprobs)(d, v) += scale * qt(v, s) / std::max(qt(v, xd), kDenomFloor);
      }
    }
  }
  return total;
}

double aux_at(const State& x0, const DenoiserOutput& out, const ConditioningMask& mask, double w,
              Eigen::MatrixXd* dprobs) {
  double total = 0.0;
  for (int d = 0; d < static_cast<int>(x0.size()); ++d) {
    if (mask.conditioned(d)) continue;
    const double p = out.probs(d, x0[d]);
    total -= std::log(p);
    if (dprobs) (*dprobs)(d, x0[d]) -= w / p;
  }
  return total;
}

struct ElementTerms {
  double term1 = 0.0;
  double term2 = 0.0;
  double aux = 0.0;
};

// One Monte Carlo tuple.  `w` scales the gradient only (value terms are
// averaged by the caller); grad may be null for value-only evaluation.
ElementTerms mc_element(const EnumerableDistribution& data, const Denoiser& den,
                        TrainableDenoiser* trainable, const ForwardProcess& fp,
                        const ObjectiveOptions& opts, Rng& rng, double w, Eigen::VectorXd* grad,
                        TrainableDenoiser::Workspace* ws) {
  const double T = fp.horizon();
  const State x0 = data.sample(rng);
  std::uniform_real_distribution<double> times(opts.epsilon, T);
  const double t = times(rng);
  const auto draw = fp.psi_sample(x0, t, rng, opts.mask);
  const Eigen::MatrixXd qt = fp.qt0(t);
  const double beta = fp.schedule().beta(t);

  const int D = fp.space().D;
  const int S = fp.space().S;
  ElementTerms terms;

  auto run_anchor = [&](const State& anchor, bool do_term1, bool do_term2, bool do_aux) {
    DenoiserOutput out = trainable ? trainable->forward(anchor, t, *ws) : den.evaluate(anchor, t);
    Eigen::MatrixXd dprobs;
    Eigen::MatrixXd* dp = nullptr;
    if (grad && trainable) {
      dprobs = Eigen::MatrixXd::Zero(D, S);
      dp = &dprobs;
    }
    if (do_term1) terms.term1 += term1_at(anchor, out, qt, beta, fp, opts.mask, w, dp);
    if (do_term2)
      terms.term2 += term2_at(draw.jumped, x0, out, qt, beta, fp, opts.mask, w, dp);
    if (do_aux && opts.lambda_aux != 0.0)
      terms.aux += aux_at(x0, out, opts.mask, w * opts.lambda_aux, dp);
    if (dp) {
      const Eigen::MatrixXd dlogits = softmax_backward_rows(out.probs, dprobs);
      trainable->backward(*ws, dlogits, *grad);
    }
  };

  if (opts.variant == CtVariant::OnePass) {
    run_anchor(draw.jumped, true, true, true);
  } else {
    run_anchor(draw.intermediate, true, false, true);
    run_anchor(draw.jumped, false, true, false);
  }
  return terms;
}

LossReport reduce_elements(const std::vector<ElementTerms>& terms, double T, double lambda) {
  LossReport report;
  report.lambda = lambda;
  const double inv = 1.0 / static_cast<double>(terms.size());
  for (const auto& e : terms) {
    report.ct_term1 += T * inv * e.term1;
    report.ct_term2 += T * inv * e.term2;
    report.aux_ll += T * inv * e.aux;
  }
  report.combine();
  return report;
}

}  // namespace

void LossReport::combine() { total = ct_term1 + ct_term2 + lambda * aux_ll; }

LossReport loss_mc_value(const EnumerableDistribution& data, const Denoiser& den,
                         const ForwardProcess& fp, const ObjectiveOptions& opts, int batch,
                         uint64_t seed, long step) {
  std::vector<ElementTerms> terms(batch);
  for (int i = 0; i < batch; ++i) {
    Rng rng = make_stream(splitmix64(seed ^ kTrainStreamTag), static_cast<uint64_t>(step),
                          static_cast<uint64_t>(i));
    terms[i] = mc_element(data, den, nullptr, fp, opts, rng, 0.0, nullptr, nullptr);
  }
  return reduce_elements(terms, fp.horizon(), opts.lambda_aux);
}

LossReport loss_mc_grad(const EnumerableDistribution& data, TrainableDenoiser& den,
                        const ForwardProcess& fp, const ObjectiveOptions& opts, int batch,
                        uint64_t seed, long step, Eigen::VectorXd& grad, bool parallel) {
  const long P = den.params().size();
  grad = Eigen::VectorXd::Zero(P);
  std::vector<ElementTerms> terms(batch);
  std::vector<Eigen::VectorXd> grads(batch);
  const double w = fp.horizon() / static_cast<double>(batch);

  // exceptions cannot unwind out of the parallel region; carry the first one
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < batch; ++i) {
    try {
      Rng rng = make_stream(splitmix64(seed ^ kTrainStreamTag), static_cast<uint64_t>(step),
                            static_cast<uint64_t>(i));
      grads[i] = Eigen::VectorXd::Zero(P);
      auto ws = den.make_workspace();
      terms[i] = mc_element(data, den, &den, fp, opts, rng, w, &grads[i], ws.get());
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  // fixed-order reduction keeps results independent of thread count
  for (int i = 0; i < batch; ++i) grad += grads[i];
  return reduce_elements(terms, fp.horizon(), opts.lambda_aux);
}

namespace {

LossReport exhaustive_core(const EnumerableDistribution& data, const Denoiser& den,
                           TrainableDenoiser* trainable, const ForwardProcess& fp,
                           const ObjectiveOptions& opts, const ExhaustiveSpec& spec,
                           Eigen::VectorXd* grad) {
  if (opts.mask.prefix != 0)
    throw std::invalid_argument("exhaustive losses do not support conditioning");
  const int D = fp.space().D;
  const int S = fp.space().S;
  const long n = joint_count(S, D);
  const BaseRateMatrix& rb = fp.rate();
  const double T = fp.horizon();
  const double range = spec.t_hi - spec.t_lo;
  if (!(range > 0.0)) throw std::invalid_argument("exhaustive losses need t_hi > t_lo");

  LossReport report;
  report.lambda = opts.lambda_aux;
  std::unique_ptr<TrainableDenoiser::Workspace> ws;
  if (trainable) ws = trainable->make_workspace();

  auto joint_prob = [&](const State& x, const State& x0, const Eigen::MatrixXd& qt) {
    double p = 1.0;
    for (int d = 0; d < D; ++d) p *= qt(x0[d], x[d]);
    return p;
  };

  const std::vector<QuadratureNode> nodes =
      spec.nodes.empty() ? gauss_legendre(spec.quad_order, spec.t_lo, spec.t_hi) : spec.nodes;
  for (const auto& node : nodes) {
    const Eigen::MatrixXd qt = fp.qt0(node.t);
    const double beta = fp.schedule().beta(node.t);
    const double wt = node.weight * T / range;

    for (size_t i0 = 0; i0 < data.support.size(); ++i0) {
      const State& x0 = data.support[i0];
      const double p0 = data.probs(static_cast<long>(i0));
      if (p0 == 0.0) continue;

      for (long j = 0; j < n; ++j) {
        const State y = joint_state(static_cast<int>(j), S, D);

        // weight of y as the noised sample x ~ q_{t|0}
        const double qy = joint_prob(y, x0, qt);
        // weight of y as the jumped sample x-tilde ~ psi_t; reusing the
        // phi construction, psi(y | x0) is the total unnormalized phi mass.
        double psi = 0.0;
        {
          double out_rate = 0.0;
          for (int d = 0; d < D; ++d) out_rate -= rb(y[d], y[d]);
          State src = y;
          for (int d = 0; d < D; ++d) {
            for (int s = 0; s < S; ++s) {
              if (s == y[d]) continue;
              const double base = rb(s, y[d]);
              if (base <= 0.0) continue;
              src[d] = s;
              const double z_sub = beta * (out_rate - rb(s, s) + rb(y[d], y[d]));
              if (z_sub > 0.0) psi += joint_prob(src, x0, qt) * beta * base / z_sub;
            }
            src[d] = y[d];
          }
        }

        const bool term1_here = (opts.variant == CtVariant::TwoPass) ? qy > 0.0 : psi > 0.0;
        const double w1 = (opts.variant == CtVariant::TwoPass) ? qy : psi;
        const bool term2_here = psi > 0.0;
        if (!term1_here && !term2_here) continue;

        DenoiserOutput out =
            trainable ? trainable->forward(y, node.t, *ws) : den.evaluate(y, node.t);
        Eigen::MatrixXd dprobs;
        Eigen::MatrixXd* dp = nullptr;
        if (grad && trainable) {
          dprobs = Eigen::MatrixXd::Zero(D, S);
          dp = &dprobs;
        }

        if (term1_here)
          report.ct_term1 +=
              wt * p0 * w1 * term1_at(y, out, qt, beta, fp, opts.mask, wt * p0 * w1, dp);
        if (term2_here)
          report.ct_term2 +=
              wt * p0 * psi * term2_at(y, x0, out, qt, beta, fp, opts.mask, wt * p0 * psi, dp);
        if (opts.lambda_aux != 0.0 && term1_here)
          report.aux_ll +=
              wt * p0 * w1 * aux_at(x0, out, opts.mask, wt * p0 * w1 * opts.lambda_aux, dp);

        if (dp) {
          const Eigen::MatrixXd dlogits = softmax_backward_rows(out.probs, dprobs);
          trainable->backward(*ws, dlogits, *grad);
        }
      }
    }
  }
  report.combine();
  return report;
}

}  // namespace

LossReport loss_exhaustive_value(const EnumerableDistribution& data, const Denoiser& den,
                                 const ForwardProcess& fp, const ObjectiveOptions& opts,
                                 const ExhaustiveSpec& spec) {
  return exhaustive_core(data, den, nullptr, fp, opts, spec, nullptr);
}

LossReport loss_exhaustive_grad(const EnumerableDistribution& data, TrainableDenoiser& den,
                                const ForwardProcess& fp, const ObjectiveOptions& opts,
                                const ExhaustiveSpec& spec, Eigen::VectorXd& grad) {
  grad = Eigen::VectorXd::Zero(den.params().size());
  return exhaustive_core(data, den, &den, fp, opts, spec, &grad);
}

DtElboParts loss_dt_exact(const EnumerableDistribution& data, const ForwardProcess& fp,
                          const Denoiser& den, int K) {
  const int D = fp.space().D;
  const int S = fp.space().S;
  const long n = joint_count(S, D);
  if (n > 4096)
    throw std::invalid_argument("state space too large for the discrete-time oracle");
  if (K < 1) throw std::invalid_argument("discrete-time oracle needs K >= 1");
  const double T = fp.horizon();

  OracleDenoiser oracle(data, fp);

  // dense joint marginal at t_k, propagated forward
  Eigen::VectorXd qk = Eigen::VectorXd::Zero(n);
  for (size_t i = 0; i < data.support.size(); ++i)
    qk(joint_index(data.support[i], S)) += data.probs(static_cast<long>(i));

  DtElboParts parts;
  for (int k = 0; k < K; ++k) {
    const double tk = T * k / K;
    const double tk1 = T * (k + 1) / K;
    const Eigen::MatrixXd M = fp.transition(tk, tk1);   // per-dimension kernel
    const Eigen::MatrixXd Pk = fp.qt0(tk);
    const Eigen::MatrixXd Pk1 = fp.qt0(tk1);

    // joint kernel row sums for the marginal update
    Eigen::VectorXd qk1 = Eigen::VectorXd::Zero(n);

    double gap = 0.0;
    for (long jnext = 0; jnext < n; ++jnext) {
      const State xnext = joint_state(static_cast<int>(jnext), S, D);

      const DenoiserOutput ptheta = den.evaluate(xnext, tk1);
      const DenoiserOutput pstar = oracle.evaluate_with(xnext, Pk1);

      // per-dimension reverse kernels over the previous value a:
      //   rev(a) = sum_v p(d, v) M(a, xnext^d) Pk(v, a) / Pk1(v, xnext^d)
      Eigen::MatrixXd rev_theta(D, S), rev_star(D, S);
      for (int d = 0; d < D; ++d) {
        const int b = xnext[d];
        for (int a = 0; a < S; ++a) {
          double acc_t = 0.0, acc_s = 0.0;
          for (int v = 0; v < S; ++v) {
            const double kern = M(a, b) * Pk(v, a) / std::max(Pk1(v, b), kDenomFloor);
            acc_t += ptheta.probs(d, v) * kern;
            acc_s += pstar.probs(d, v) * kern;
          }
          rev_theta(d, a) = acc_t;
          rev_star(d, a) = acc_s;
        }
      }

      for (long jprev = 0; jprev < n; ++jprev) {
        if (qk(jprev) == 0.0) continue;
        const State xprev = joint_state(static_cast<int>(jprev), S, D);
        double pair_w = qk(jprev);
        for (int d = 0; d < D; ++d) pair_w *= M(xprev[d], xnext[d]);
        if (pair_w == 0.0) continue;
        qk1(jnext) += pair_w;
        double log_gap = 0.0;
        for (int d = 0; d < D; ++d) {
          const double rt = rev_theta(d, xprev[d]);
          const double rs = rev_star(d, xprev[d]);
          if (!(rt > 0.0) || !(rs > 0.0))
            throw std::runtime_error("discrete-time oracle: zero reverse kernel mass");
          log_gap += std::log(rs) - std::log(rt);
        }
        gap += pair_w * log_gap;
      }
    }
    if (k == 0)
      parts.reconstruction_gap += gap;
    else
      parts.kl_sum_gap += gap;
    qk = qk1;
  }
  return parts;
}

void train_loop(const EnumerableDistribution& data, TrainableDenoiser& den,
                const ForwardProcess& fp, const TrainOptions& opts, AdamOptimizer& optimizer,
                const TrainHooks& hooks) {
  ObjectiveOptions lopts;
  lopts.variant = opts.variant;
  lopts.lambda_aux = opts.lambda_aux;
  lopts.epsilon = opts.epsilon;
  lopts.mask = opts.mask;

  Eigen::VectorXd grad(den.params().size());
  const long first = optimizer.steps_taken();
  for (long step = first; step < opts.steps; ++step) {
    const LossReport report = loss_mc_grad(data, den, fp, lopts, opts.batch_size, opts.seed, step,
                                           grad, opts.parallel);
    if (!std::isfinite(report.total) || !grad.allFinite()) {
      std::ostringstream os;
      os << "training aborted: non-finite loss at step " << step + 1 << " (total=" << report.total
         << ")";
      throw std::runtime_error(os.str());
    }
    optimizer.step(den.params(), grad);
    den.params().check_finite();
    const long done = step + 1;
    if (hooks.on_log && (done == 1 || done % opts.log_every == 0 || done == opts.steps))
      hooks.on_log(done, report, optimizer.last_grad_norm());
    if (hooks.on_step_end) hooks.on_step_end(done);
  }
}

}  // namespace ctdd
