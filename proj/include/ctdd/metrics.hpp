#ifndef CTDD_METRICS_HPP
#define CTDD_METRICS_HPP

#include <Eigen/Dense>
#include <vector>

#include "ctdd/enumerable.hpp"

namespace ctdd {

// Counts over a finite index set; normalization happens on demand.
struct Histogram {
  Eigen::VectorXd counts;
  double total = 0.0;

  static Histogram zeros(long bins);
  void add(long bin, double weight = 1.0);
  Eigen::VectorXd normalized() const;

  // joint-state histogram over S^D cells
  static Histogram joint_states(const std::vector<State>& samples, int S, int D);
  // pooled per-token histogram over S cells
  static Histogram pooled_tokens(const std::vector<State>& samples, int S, int from_dim = 0);
  static Histogram from_weights(const Eigen::VectorXd& weights);
};

// sqrt(1 - sum_i sqrt(p_i q_i)) on normalized histograms, in [0, 1].
double hellinger(const Histogram& p, const Histogram& q);

// (1/2) sum_i |empirical_i - p_i| between a histogram and an exact
// distribution on the same index set.
double tv_exact(const Histogram& empirical, const Eigen::VectorXd& p);

// Delta-method standard error of the total-variation statistic under
// multinomial sampling, with the observed signs.
double tv_standard_error(const Histogram& empirical, const Eigen::VectorXd& p);

// Fraction of generated tokens (within the completion region) whose value
// appears nowhere in the reference sequence's completion region.
double outlier_proportion(const std::vector<State>& generated, const State& reference,
                          int completion_start = 0);

}  // namespace ctdd

#endif
