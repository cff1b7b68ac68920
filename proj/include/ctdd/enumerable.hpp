#ifndef CTDD_ENUMERABLE_HPP
#define CTDD_ENUMERABLE_HPP

#include <Eigen/Dense>
#include <vector>

#include "ctdd/forward_process.hpp"

namespace ctdd {

// A data distribution with an enumerable support, the workhorse for exact
// oracles on tiny chains and for sequence corpora (support = the corpus).
struct EnumerableDistribution {
  std::vector<State> support;
  Eigen::VectorXd probs;

  int dims() const { return support.empty() ? 0 : static_cast<int>(support.front().size()); }
  void validate(int S, int D) const;

  // Dense distribution over all S^D joint states (refuses above ~1e5 states).
  static EnumerableDistribution dense(int S, int D, const Eigen::VectorXd& joint_probs);
  static EnumerableDistribution from_points(std::vector<State> support, Eigen::VectorXd weights);

  // q_t over the joint space as a dense vector indexed by joint_index
  // (refuses when S^D is too large).
  Eigen::VectorXd marginal_at(const ForwardProcess& fp, double t) const;
  Eigen::VectorXd marginal_at(const ForwardProcess& fp, const Eigen::MatrixXd& qt) const;

  // q_t evaluated at one joint state: sum over the support of
  // p_data(x0) prod_d q_{t|0}(x^d | x0^d).
  double marginal_of(const State& x, const Eigen::MatrixXd& qt) const;

  State sample(Rng& rng) const;
};

int joint_index(const State& x, int S);
State joint_state(int index, int S, int D);
long joint_count(int S, int D);  // throws above ~1e5

}  // namespace ctdd

#endif
