#include "ctdd/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

void DenoiserOutput::check() const {
  for (int d = 0; d < probs.rows(); ++d) {
    double total = 0.0;
    for (int s = 0; s < probs.cols(); ++s) {
      if (!(probs(d, s) > 0.0) || !std::isfinite(probs(d, s)))
        throw std::runtime_error("denoiser output: probabilities must be strictly positive");
      total += probs(d, s);
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::runtime_error("denoiser output: row does not sum to 1");
  }
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd probs = logits;
  for (int d = 0; d < logits.rows(); ++d) {
    const double m = logits.row(d).maxCoeff();
    double total = 0.0;
    for (int s = 0; s < logits.cols(); ++s) {
      probs(d, s) = std::exp(logits(d, s) - m);
      total += probs(d, s);
    }
    probs.row(d) /= total;
  }
  return probs;
}

Eigen::MatrixXd softmax_backward_rows(const Eigen::MatrixXd& probs,
                                      const Eigen::MatrixXd& dprobs) {
  Eigen::MatrixXd dlogits = probs;
  for (int d = 0; d < probs.rows(); ++d) {
    const double inner = probs.row(d).dot(dprobs.row(d));
    for (int s = 0; s < probs.cols(); ++s)
      dlogits(d, s) = probs(d, s) * (dprobs(d, s) - inner);
  }
  return dlogits;
}

OracleDenoiser::OracleDenoiser(EnumerableDistribution p_data, const ForwardProcess& fp)
    : p_data_(std::move(p_data)), fp_(&fp) {
  p_data_.validate(fp.space().S, fp.space().D);
}

DenoiserOutput OracleDenoiser::evaluate(const State& x, double t) const {
  return evaluate_with(x, fp_->qt0(t));
}

DenoiserOutput OracleDenoiser::evaluate_with(const State& x, const Eigen::MatrixXd& qt) const {
  const int D = fp_->space().D;
  const int S = fp_->space().S;
  Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(D, S);
  double total = 0.0;
  for (size_t i = 0; i < p_data_.support.size(); ++i) {
    double w = p_data_.probs(static_cast<long>(i));
    if (w == 0.0) continue;
    const State& x0 = p_data_.support[i];
    for (int d = 0; d < D; ++d) w *= qt(x0[d], x[d]);
    if (w == 0.0) continue;
    total += w;
    for (int d = 0; d < D; ++d) marg(d, x0[d]) += w;
  }
  if (!(total > 0.0))
    throw std::runtime_error("undefined posterior: state has zero forward mass");
  marg /= total;
  // A strictly positive floor keeps downstream logs finite where the support
  // does not cover a clean value.
  constexpr double kFloor = 1e-150;
  for (int d = 0; d < D; ++d) {
    double row = 0.0;
    for (int s = 0; s < S; ++s) {
      marg(d, s) = std::max(marg(d, s), kFloor);
      row += marg(d, s);
    }
    marg.row(d) /= row;
  }
  return DenoiserOutput{std::move(marg)};
}

PerturbedOracleDenoiser::PerturbedOracleDenoiser(EnumerableDistribution p_data,
                                                 const ForwardProcess& fp, double scale,
                                                 uint64_t seed)
    : oracle_(std::move(p_data), fp), S_(fp.space().S), D_(fp.space().D) {
  const long joint = joint_count(S_, D_);
  offsets_.resize(static_cast<size_t>(joint) * D_ * S_);
  Rng rng = make_stream(seed, /*stream=*/0x0FF5E7);
  std::normal_distribution<double> noise(0.0, scale);
  for (double& v : offsets_) v = noise(rng);
}

DenoiserOutput PerturbedOracleDenoiser::evaluate(const State& x, double t) const {
  DenoiserOutput out = oracle_.evaluate(x, t);
  const long base = static_cast<long>(joint_index(x, S_)) * D_ * S_;
  Eigen::MatrixXd logits(D_, S_);
  for (int d = 0; d < D_; ++d)
    for (int s = 0; s < S_; ++s)
      logits(d, s) = std::log(out.probs(d, s)) + offsets_[base + d * S_ + s];
  out.probs = softmax_rows(logits);
  return out;
}

}  // namespace ctdd
