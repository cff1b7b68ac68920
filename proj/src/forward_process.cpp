#include "ctdd/forward_process.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

namespace {
constexpr double kNegativeEntryTol = 1e-10;

int sample_categorical_row(const Eigen::MatrixXd& P, int row, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  const int S = static_cast<int>(P.cols());
  for (int j = 0; j < S; ++j) {
    acc += P(row, j);
    if (u <= acc) return j;
  }
  return S - 1;
}
}  // namespace

ForwardProcess::ForwardProcess(StateSpace space, BaseRateMatrix rate, BetaSchedule schedule,
                               double horizon)
    : space_(std::move(space)),
      rate_(std::move(rate)),
      spectral_(rate_.decompose()),
      schedule_(std::move(schedule)),
      horizon_(horizon) {
  space_.validate();
  if (space_.S != rate_.size())
    throw std::invalid_argument("forward process: state space and rate matrix disagree on S");
  if (!(horizon_ > 0.0)) throw std::invalid_argument("forward process: horizon must be positive");
}

void ForwardProcess::check_time(double t) const {
  if (!(t >= 0.0) || t > horizon_ * (1.0 + 1e-12))
    throw std::invalid_argument("invalid time: t outside [0, T]");
}

void ForwardProcess::check_state(const State& x) const {
  if (static_cast<int>(x.size()) != space_.D)
    throw std::invalid_argument("state has wrong dimension count");
  for (int v : x)
    if (v < 0 || v >= space_.S) throw std::invalid_argument("state value out of range");
}

Eigen::MatrixXd ForwardProcess::qt0(double t) const {
  check_time(t);
  return transition(0.0, t);
}

Eigen::MatrixXd ForwardProcess::transition(double s, double t) const {
  if (t < s) throw std::invalid_argument("invalid time: transition needs t >= s");
  const double du = schedule_.integral(t) - schedule_.integral(s);
  const int S = space_.S;
  Eigen::VectorXd ex(S);
  for (int i = 0; i < S; ++i) ex(i) = std::exp(spectral_.eigenvalues(i) * du);
  Eigen::MatrixXd P = spectral_.Q * ex.asDiagonal() * spectral_.Qinv;

  for (int i = 0; i < S; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < S; ++j) {
      if (P(i, j) < 0.0) {
        if (P(i, j) < -kNegativeEntryTol)
          throw std::runtime_error("transition matrix entry below -1e-10; spectral solve unusable");
        P(i, j) = 0.0;
      }
      row_sum += P(i, j);
    }
    if (!(row_sum > 0.0))
      throw std::runtime_error("transition matrix row degenerate");
    P.row(i) /= row_sum;
  }
  return P;
}

State ForwardProcess::sample_forward(const State& x0, double t, Rng& rng,
                                     const ConditioningMask& mask) const {
  check_state(x0);
  const Eigen::MatrixXd P = qt0(t);
  State x = x0;
  for (int d = 0; d < space_.D; ++d) {
    if (mask.conditioned(d)) continue;
    x[d] = sample_categorical_row(P, x0[d], rng);
  }
  return x;
}

double ForwardProcess::z_total(const State& x, double t, const ConditioningMask& mask) const {
  check_state(x);
  check_time(t);
  double out = 0.0;
  for (int d = 0; d < space_.D; ++d) {
    if (mask.conditioned(d)) continue;
    out -= rate_(x[d], x[d]);
  }
  return schedule_.beta(t) * out;
}

Eigen::MatrixXd ForwardProcess::jump_distribution(const State& x, double t,
                                                  const ConditioningMask& mask) const {
  const double z = z_total(x, t, mask);
  if (!(z > 0.0))
    throw std::runtime_error("no jump available: total outward rate is zero");
  const double beta = schedule_.beta(t);
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(space_.D, space_.S);
  for (int d = 0; d < space_.D; ++d) {
    if (mask.conditioned(d)) continue;
    for (int s = 0; s < space_.S; ++s) {
      if (s == x[d]) continue;
      probs(d, s) = beta * rate_(x[d], s) / z;
    }
  }
  return probs;
}

ForwardProcess::Jump ForwardProcess::sample_jump(const State& x, double t, Rng& rng,
                                                 const ConditioningMask& mask) const {
  const Eigen::MatrixXd probs = jump_distribution(x, t, mask);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  Jump last;
  for (int d = 0; d < space_.D; ++d) {
    for (int s = 0; s < space_.S; ++s) {
      if (probs(d, s) <= 0.0) continue;
      acc += probs(d, s);
      last = Jump{d, s};
      if (u <= acc) return last;
    }
  }
  return last;
}

ForwardProcess::PsiDraw ForwardProcess::psi_sample(const State& x0, double t, Rng& rng,
                                                   const ConditioningMask& mask) const {
  PsiDraw draw;
  draw.intermediate = sample_forward(x0, t, rng, mask);
  draw.jump = sample_jump(draw.intermediate, t, rng, mask);
  draw.jumped = draw.intermediate;
  draw.jumped[draw.jump.dim] = draw.jump.state;
  return draw;
}

Eigen::MatrixXd ForwardProcess::phi_weights(const State& xt, const State& x0,
                                            const Eigen::MatrixXd& qt,
                                            const ConditioningMask& mask) const {
  check_state(xt);
  check_state(x0);
  const int S = space_.S;
  const int D = space_.D;

  // Outward-rate total of the current state over unconditioned dimensions;
  // substituting dimension d with s shifts it by the diagonal difference.
  double out_rate = 0.0;
  for (int d = 0; d < D; ++d)
    if (!mask.conditioned(d)) out_rate -= rate_(xt[d], xt[d]);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(D, S);
  double total = 0.0;
  for (int d = 0; d < D; ++d) {
    if (mask.conditioned(d)) continue;
    const double denom = qt(x0[d], xt[d]);
    for (int s = 0; s < S; ++s) {
      if (s == xt[d]) continue;
      const double rate_in = rate_(s, xt[d]);
      if (rate_in <= 0.0) continue;
      const double z_sub = out_rate + (-rate_(s, s)) - (-rate_(xt[d], xt[d]));
      if (!(z_sub > 0.0)) continue;
      const double ratio = qt(x0[d], s) / std::max(denom, 1e-300);
      w(d, s) = rate_in * ratio / z_sub;
      total += w(d, s);
    }
  }
  if (!(total > 0.0))
    throw std::runtime_error("degenerate proposal: all phi weights vanish");
  w /= total;
  return w;
}

Eigen::MatrixXd ForwardProcess::phi_weights(const State& xt, const State& x0, double t,
                                            const ConditioningMask& mask) const {
  if (!(t > 0.0)) throw std::invalid_argument("invalid time: phi weights need t > 0");
  return phi_weights(xt, x0, qt0(t), mask);
}

State ForwardProcess::sample_stationary(Rng& rng) const {
  const Eigen::VectorXd& p = rate_.stationary();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  State x(space_.D, 0);
  for (int d = 0; d < space_.D; ++d) {
    const double u = unit(rng);
    double acc = 0.0;
    int pick = space_.S - 1;
    for (int s = 0; s < space_.S; ++s) {
      acc += p(s);
      if (u <= acc) {
        pick = s;
        break;
      }
    }
    x[d] = pick;
  }
  return x;
}

}  // namespace ctdd
