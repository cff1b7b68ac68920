#include "ctdd/tabular_denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

struct TabularDenoiser::Ws : TrainableDenoiser::Workspace {
  int bin = 0;
  int jidx = 0;
  Eigen::MatrixXd probs;
};

TabularDenoiser::TabularDenoiser(const StateSpace& space, int time_bins, double epsilon,
                                 double horizon, double ema_decay)
    : space_(space), bins_(time_bins), epsilon_(epsilon), horizon_(horizon) {
  space_.validate();
  if (bins_ < 1) throw std::invalid_argument("tabular denoiser needs at least one time bin");
  if (!(epsilon_ > 0.0) || !(epsilon_ < horizon_))
    throw std::invalid_argument("tabular denoiser needs 0 < epsilon < T");
  joint_ = joint_count(space_.S, space_.D);
  params_.add_segment("table", {bins_, joint_, space_.D, space_.S});
  params_.finalize(ema_decay);
}

int TabularDenoiser::time_bin(double t) const {
  const double frac = (t - epsilon_) / (horizon_ - epsilon_);
  int bin = static_cast<int>(std::floor(frac * bins_));
  if (bin < 0) bin = 0;
  if (bin >= bins_) bin = bins_ - 1;
  return bin;
}

long TabularDenoiser::cell_offset(int bin, int jidx, int d) const {
  return ((static_cast<long>(bin) * joint_ + jidx) * space_.D + d) * space_.S;
}

DenoiserOutput TabularDenoiser::evaluate(const State& x, double t) const {
  const int bin = time_bin(t);
  const int jidx = joint_index(x, space_.S);
  Eigen::MatrixXd logits(space_.D, space_.S);
  const double* base = params_.values().data();
  for (int d = 0; d < space_.D; ++d) {
    const double* row = base + cell_offset(bin, jidx, d);
    for (int s = 0; s < space_.S; ++s) logits(d, s) = row[s];
  }
  return DenoiserOutput{softmax_rows(logits)};
}

std::unique_ptr<TrainableDenoiser::Workspace> TabularDenoiser::make_workspace() const {
  return std::make_unique<Ws>();
}

DenoiserOutput TabularDenoiser::forward(const State& x, double t, Workspace& ws) const {
  auto& w = static_cast<Ws&>(ws);
  w.bin = time_bin(t);
  w.jidx = joint_index(x, space_.S);
  DenoiserOutput out = evaluate(x, t);
  w.probs = out.probs;
  return out;
}

void TabularDenoiser::backward(const Workspace& ws, const Eigen::MatrixXd& logit_adjoint,
                               Eigen::VectorXd& grad) const {
  const auto& w = static_cast<const Ws&>(ws);
  for (int d = 0; d < space_.D; ++d) {
    double* row = grad.data() + cell_offset(w.bin, w.jidx, d);
    for (int s = 0; s < space_.S; ++s) row[s] += logit_adjoint(d, s);
  }
}

}  // namespace ctdd
