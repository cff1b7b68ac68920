#include "ctdd/metrics.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace ctdd {

Histogram Histogram::zeros(long bins) {
  Histogram h;
  h.counts = Eigen::VectorXd::Zero(bins);
  return h;
}

void Histogram::add(long bin, double weight) {
  counts(bin) += weight;
  total += weight;
}

Eigen::VectorXd Histogram::normalized() const {
  if (!(total > 0.0)) throw std::runtime_error("undefined metric: empty histogram");
  return counts / total;
}

Histogram Histogram::joint_states(const std::vector<State>& samples, int S, int D) {
  Histogram h = zeros(joint_count(S, D));
  for (const State& x : samples) h.add(joint_index(x, S));
  return h;
}

Histogram Histogram::pooled_tokens(const std::vector<State>& samples, int S, int from_dim) {
  Histogram h = zeros(S);
  for (const State& x : samples)
    for (size_t d = from_dim; d < x.size(); ++d) h.add(x[d]);
  return h;
}

Histogram Histogram::from_weights(const Eigen::VectorXd& weights) {
  Histogram h;
  h.counts = weights;
  h.total = weights.sum();
  return h;
}

double hellinger(const Histogram& p, const Histogram& q) {
  if (p.counts.size() != q.counts.size())
    throw std::invalid_argument("hellinger: histograms use different index sets");
  const Eigen::VectorXd pn = p.normalized();
  const Eigen::VectorXd qn = q.normalized();
  double bc = 0.0;
  for (long i = 0; i < pn.size(); ++i) bc += std::sqrt(pn(i) * qn(i));
  return std::sqrt(std::max(0.0, 1.0 - bc));
}

double tv_exact(const Histogram& empirical, const Eigen::VectorXd& p) {
  if (empirical.counts.size() != p.size())
    throw std::invalid_argument("tv: index sets differ");
  const Eigen::VectorXd e = empirical.normalized();
  return 0.5 * (e - p).cwiseAbs().sum();
}

double tv_standard_error(const Histogram& empirical, const Eigen::VectorXd& p) {
  const Eigen::VectorXd e = empirical.normalized();
  double mean_signed = 0.0;
  double second = 0.0;
  for (long i = 0; i < p.size(); ++i) {
    const double sign = e(i) >= p(i) ? 1.0 : -1.0;
    mean_signed += sign * e(i);
    second += e(i);
  }
  const double var = std::max(0.0, second - mean_signed * mean_signed);
  return 0.5 * std::sqrt(var / empirical.total);
}

double outlier_proportion(const std::vector<State>& generated, const State& reference,
                          int completion_start) {
  if (generated.empty()) throw std::invalid_argument("undefined metric: no generated sequences");
  if (completion_start >= static_cast<int>(reference.size()))
    throw std::invalid_argument("undefined metric: empty reference completion region");
  std::set<int> vocab(reference.begin() + completion_start, reference.end());
  long outliers = 0;
  long tokens = 0;
  for (const State& g : generated) {
    for (size_t d = completion_start; d < g.size(); ++d) {
      ++tokens;
      if (!vocab.count(g[d])) ++outliers;
    }
  }
  if (tokens == 0) throw std::invalid_argument("undefined metric: no generated tokens");
  return static_cast<double>(outliers) / static_cast<double>(tokens);
}

}  // namespace ctdd
