#ifndef CTDD_TABULAR_DENOISER_HPP
#define CTDD_TABULAR_DENOISER_HPP

#include "ctdd/denoiser.hpp"
#include "ctdd/parameters.hpp"

namespace ctdd {

// Logit lookup table over (time bin, joint state, dimension, clean value) for
// tiny problems.  Time is binned uniformly on [epsilon, T].
class TabularDenoiser : public TrainableDenoiser {
 public:
  TabularDenoiser(const StateSpace& space, int time_bins, double epsilon, double horizon,
                  double ema_decay = 0.9999);

  DenoiserOutput evaluate(const State& x, double t) const override;
  std::unique_ptr<Workspace> make_workspace() const override;
  DenoiserOutput forward(const State& x, double t, Workspace& ws) const override;
  void backward(const Workspace& ws, const Eigen::MatrixXd& logit_adjoint,
                Eigen::VectorXd& grad) const override;
  ParameterVector& params() override { return params_; }
  const ParameterVector& params() const override { return params_; }

  int time_bin(double t) const;
  long cell_offset(int bin, int jidx, int d) const;  // offset of the S-row
  int time_bins() const { return bins_; }

 private:
  struct Ws;
  StateSpace space_;
  int bins_;
  double epsilon_;
  double horizon_;
  long joint_;
  ParameterVector params_;
};

}  // namespace ctdd

#endif
