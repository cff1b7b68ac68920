#include "ctdd/reverse_rates.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

namespace {
constexpr double kDenomFloor = 1e-35;
}

ReverseRateTable model_reverse_rates(const State& x, double t, const DenoiserOutput& out,
                                     const ForwardProcess& fp) {
  if (!(t > 0.0)) throw std::invalid_argument("model reverse rates need t > 0");
  return model_reverse_rates_with(x, fp.qt0(t), fp.schedule().beta(t), out, fp);
}

ReverseRateTable model_reverse_rates_with(const State& x, const Eigen::MatrixXd& qt, double beta,
                                          const DenoiserOutput& out, const ForwardProcess& fp) {
  const int D = fp.space().D;
  const int S = fp.space().S;
  const BaseRateMatrix& rb = fp.rate();
  ReverseRateTable table;
  table.rates = Eigen::MatrixXd::Zero(D, S);

  for (int d = 0; d < D; ++d) {
    const int xd = x[d];
    bool any_needed = false;
    bool any_alive = false;
    for (int v = 0; v < S; ++v)
      if (qt(v, xd) > kDenomFloor) any_alive = true;
    for (int s = 0; s < S; ++s) {
      if (s == xd) continue;
      const double base = rb(s, xd);
      if (base <= 0.0) continue;  // structurally forbidden jumps stay exactly 0
      any_needed = true;
      double acc = 0.0;
      for (int v = 0; v < S; ++v) {
        const double p = out.probs(d, v);
        if (p <= 0.0) continue;
        acc += p * qt(v, s) / std::max(qt(v, xd), kDenomFloor);
      }
      const double rate = beta * base * acc;
      if (!std::isfinite(rate))
        throw std::runtime_error("ill-conditioned rate: reverse rate overflow");
      table.rates(d, s) = rate;
    }
    if (any_needed && !any_alive)
      throw std::runtime_error(
          "ill-conditioned rate: q_{t|0}(x^d | x0) underflow for every clean value");
  }
  return table;
}

ReverseRateTable exact_reverse_rates(const State& x, double t,
                                     const EnumerableDistribution& p_data,
                                     const ForwardProcess& fp) {
  const int D = fp.space().D;
  const int S = fp.space().S;
  const BaseRateMatrix& rb = fp.rate();
  const Eigen::MatrixXd qt = fp.qt0(t);
  const double beta = fp.schedule().beta(t);

  const double qx = p_data.marginal_of(x, qt);
  if (!(qx > 0.0))
    throw std::runtime_error("undefined reverse rate: q_t(x) = 0");

  ReverseRateTable table;
  table.rates = Eigen::MatrixXd::Zero(D, S);
  State y = x;
  for (int d = 0; d < D; ++d) {
    for (int s = 0; s < S; ++s) {
      if (s == x[d]) continue;
      const double base = rb(s, x[d]);
      if (base <= 0.0) continue;
      y[d] = s;
      table.rates(d, s) = beta * base * p_data.marginal_of(y, qt) / qx;
    }
    y[d] = x[d];
  }
  return table;
}

ReverseRateTable corrector_rates(const State& x, double t, const DenoiserOutput& out,
                                 const ForwardProcess& fp) {
  return corrector_rates_with(x, fp.qt0(t), fp.schedule().beta(t), out, fp);
}

ReverseRateTable corrector_rates_with(const State& x, const Eigen::MatrixXd& qt, double beta,
                                      const DenoiserOutput& out, const ForwardProcess& fp) {
  ReverseRateTable table = model_reverse_rates_with(x, qt, beta, out, fp);
  const int D = fp.space().D;
  const int S = fp.space().S;
  const BaseRateMatrix& rb = fp.rate();
  for (int d = 0; d < D; ++d)
    for (int s = 0; s < S; ++s)
      if (s != x[d]) table.rates(d, s) += beta * rb(x[d], s);
  return table;
}

}  // namespace ctdd
