#include "ctdd/enumerable.hpp"

#include <stdexcept>

namespace ctdd {

namespace {
constexpr long kJointLimit = 200000;
}

int joint_index(const State& x, int S) {
  long idx = 0;
  for (int d = static_cast<int>(x.size()) - 1; d >= 0; --d) idx = idx * S + x[d];
  return static_cast<int>(idx);
}

State joint_state(int index, int S, int D) {
  State x(D);
  for (int d = 0; d < D; ++d) {
    x[d] = index % S;
    index /= S;
  }
  return x;
}

long joint_count(int S, int D) {
  long n = 1;
  for (int d = 0; d < D; ++d) {
    n *= S;
    if (n > kJointLimit)
      throw std::invalid_argument("state space too large for exhaustive enumeration");
  }
  return n;
}

void EnumerableDistribution::validate(int S, int D) const {
  if (support.empty()) throw std::invalid_argument("enumerable distribution: empty support");
  if (static_cast<int>(probs.size()) != static_cast<int>(support.size()))
    throw std::invalid_argument("enumerable distribution: probs/support size mismatch");
  double total = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    if (!(probs(i) >= 0.0)) throw std::invalid_argument("enumerable distribution: negative mass");
    total += probs(i);
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("enumerable distribution: mass does not sum to 1");
  for (const State& x : support) {
    if (static_cast<int>(x.size()) != D)
      throw std::invalid_argument("enumerable distribution: wrong dimension count");
    for (int v : x)
      if (v < 0 || v >= S) throw std::invalid_argument("enumerable distribution: value out of range");
  }
}

EnumerableDistribution EnumerableDistribution::dense(int S, int D,
                                                     const Eigen::VectorXd& joint_probs) {
  const long n = joint_count(S, D);
  if (joint_probs.size() != n)
    throw std::invalid_argument("dense distribution: wrong joint size");
  EnumerableDistribution out;
  out.support.reserve(n);
  out.probs = joint_probs / joint_probs.sum();
  for (long i = 0; i < n; ++i) out.support.push_back(joint_state(static_cast<int>(i), S, D));
  return out;
}

EnumerableDistribution EnumerableDistribution::from_points(std::vector<State> support,
                                                           Eigen::VectorXd weights) {
  if (support.empty() || weights.size() != static_cast<long>(support.size()))
    throw std::invalid_argument("enumerable distribution: bad support/weights");
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("enumerable distribution: zero total mass");
  EnumerableDistribution out;
  out.support = std::move(support);
  out.probs = weights / total;
  return out;
}

Eigen::VectorXd EnumerableDistribution::marginal_at(const ForwardProcess& fp, double t) const {
  return marginal_at(fp, fp.qt0(t));
}

Eigen::VectorXd EnumerableDistribution::marginal_at(const ForwardProcess& fp,
                                                    const Eigen::MatrixXd& qt) const {
  const int S = fp.space().S;
  const int D = fp.space().D;
  const long n = joint_count(S, D);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (long j = 0; j < n; ++j) {
    const State x = joint_state(static_cast<int>(j), S, D);
    q(j) = marginal_of(x, qt);
  }
  return q;
}

double EnumerableDistribution::marginal_of(const State& x, const Eigen::MatrixXd& qt) const {
  double out = 0.0;
  for (size_t i = 0; i < support.size(); ++i) {
    double w = probs(static_cast<long>(i));
    if (w == 0.0) continue;
    const State& x0 = support[i];
    for (size_t d = 0; d < x.size(); ++d) w *= qt(x0[d], x[d]);
    out += w;
  }
  return out;
}

State EnumerableDistribution::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  for (size_t i = 0; i < support.size(); ++i) {
    acc += probs(static_cast<long>(i));
    if (u <= acc) return support[i];
  }
  return support.back();
}

}  // namespace ctdd
