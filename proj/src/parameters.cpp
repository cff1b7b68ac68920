#include "ctdd/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

long ParameterVector::add_segment(const std::string& name, std::vector<long> shape) {
  if (finalized_) throw std::logic_error("parameter vector already finalized");
  long size = 1;
  for (long s : shape) size *= s;
  ParamSegment seg;
  seg.name = name;
  seg.offset = total_;
  seg.shape = std::move(shape);
  seg.size = size;
  segments_.push_back(seg);
  total_ += size;
  return seg.offset;
}

void ParameterVector::finalize(double ema_decay) {
  if (finalized_) throw std::logic_error("parameter vector already finalized");
  if (ema_decay < 0.0 || ema_decay > 1.0)
    throw std::invalid_argument("ema decay must lie in [0, 1]");
  values_ = Eigen::VectorXd::Zero(total_);
  ema_ = Eigen::VectorXd::Zero(total_);
  ema_decay_ = ema_decay;
  finalized_ = true;
}

const ParamSegment& ParameterVector::segment(const std::string& name) const {
  for (const auto& seg : segments_)
    if (seg.name == name) return seg;
  throw std::invalid_argument("no parameter segment named " + name);
}

Eigen::Map<Eigen::VectorXd> ParameterVector::view(const std::string& name) {
  const ParamSegment& seg = segment(name);
  return Eigen::Map<Eigen::VectorXd>(values_.data() + seg.offset, seg.size);
}

Eigen::Map<const Eigen::VectorXd> ParameterVector::view(const std::string& name) const {
  const ParamSegment& seg = segment(name);
  return Eigen::Map<const Eigen::VectorXd>(values_.data() + seg.offset, seg.size);
}

void ParameterVector::update_ema() {
  ema_ = ema_decay_ * ema_ + (1.0 - ema_decay_) * values_;
}

void ParameterVector::reset_ema_to_values() { ema_ = values_; }

void ParameterVector::check_finite() const {
  if (!values_.allFinite()) throw std::runtime_error("parameter vector has non-finite entries");
}

AdamOptimizer::AdamOptimizer(long size, Options opts)
    : opts_(opts), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void AdamOptimizer::step(ParameterVector& params, Eigen::VectorXd grad) {
  if (grad.size() != m_.size()) throw std::invalid_argument("gradient size mismatch");
  last_grad_norm_ = grad.norm();
  if (opts_.clip_norm > 0.0 && last_grad_norm_ > opts_.clip_norm)
    grad *= opts_.clip_norm / last_grad_norm_;

  ++step_;
  double lr = opts_.lr;
  if (opts_.warmup_steps > 0 && step_ <= opts_.warmup_steps)
    lr *= static_cast<double>(step_) / static_cast<double>(opts_.warmup_steps);

  m_ = opts_.beta1 * m_ + (1.0 - opts_.beta1) * grad;
  v_ = opts_.beta2 * v_ + (1.0 - opts_.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
  const Eigen::ArrayXd mhat = m_.array() / bc1;
  const Eigen::ArrayXd vhat = v_.array() / bc2;
  params.values().array() -= lr * mhat / (vhat.sqrt() + opts_.eps);
  params.update_ema();
}

void AdamOptimizer::restore(long step, Eigen::VectorXd m, Eigen::VectorXd v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("optimizer state size mismatch");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace ctdd
