#ifndef CTDD_REVERSE_RATES_HPP
#define CTDD_REVERSE_RATES_HPP

#include <Eigen/Dense>

#include "ctdd/denoiser.hpp"
#include "ctdd/enumerable.hpp"
#include "ctdd/forward_process.hpp"

namespace ctdd {

// Reverse rates out of an anchor state, restricted to single-dimension
// changes: entry (d, s) is the rate of x -> x with dimension d set to s.
// The slot s = x^d is stored as 0; the diagonal value is derived on demand.
struct ReverseRateTable {
  Eigen::MatrixXd rates;  // D x S, nonnegative, finite
  double total_outward() const { return rates.sum(); }
};

// Model-parameterized reverse rate:
//   entry(d, s) = beta(t) R_b(s, x^d) * sum_v p(d, v) q_{t|0}(s|v) / q_{t|0}(x^d|v).
// Denominators are floored at 1e-35; if every denominator for a needed entry
// underflows, throws (t is below the training cutoff).
ReverseRateTable model_reverse_rates(const State& x, double t, const DenoiserOutput& out,
                                     const ForwardProcess& fp);
// Shared-marginal variant; qt = fp.qt0(t), beta = fp.schedule().beta(t).
ReverseRateTable model_reverse_rates_with(const State& x, const Eigen::MatrixXd& qt, double beta,
                                          const DenoiserOutput& out, const ForwardProcess& fp);

// Exact time reversal via exhaustive marginals:
//   entry(d, s) = beta(t) R_b(s, x^d) q_t(x with x^d = s) / q_t(x).
ReverseRateTable exact_reverse_rates(const State& x, double t, const EnumerableDistribution& p_data,
                                     const ForwardProcess& fp);

// Corrector rate R^c = R_t + R-hat_t restricted to single-dimension changes.
ReverseRateTable corrector_rates(const State& x, double t, const DenoiserOutput& out,
                                 const ForwardProcess& fp);
ReverseRateTable corrector_rates_with(const State& x, const Eigen::MatrixXd& qt, double beta,
                                      const DenoiserOutput& out, const ForwardProcess& fp);

}  // namespace ctdd

#endif
