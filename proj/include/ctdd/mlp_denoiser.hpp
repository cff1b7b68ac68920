#ifndef CTDD_MLP_DENOISER_HPP
#define CTDD_MLP_DENOISER_HPP

#include "ctdd/denoiser.hpp"
#include "ctdd/parameters.hpp"

namespace ctdd {

// Residual MLP with sinusoidal time embedding and FiLM conditioning.
// Input is the D state values mapped to [-1, 1]; output is D x S logits.
// The output layer is zero-initialized so a fresh model is uniform.
struct MlpConfig {
  int hidden_width = 16;
  int blocks = 2;
  int block_hidden = 32;
  int time_embed_dim = 32;
  int time_hidden = 32;
  int time_out = 128;
  double ema_decay = 0.9999;
  uint64_t init_seed = 0;
};

class MlpDenoiser : public TrainableDenoiser {
 public:
  MlpDenoiser(const StateSpace& space, MlpConfig cfg);

  DenoiserOutput evaluate(const State& x, double t) const override;
  std::unique_ptr<Workspace> make_workspace() const override;
  DenoiserOutput forward(const State& x, double t, Workspace& ws) const override;
  void backward(const Workspace& ws, const Eigen::MatrixXd& logit_adjoint,
                Eigen::VectorXd& grad) const override;
  ParameterVector& params() override { return params_; }
  const ParameterVector& params() const override { return params_; }

  const MlpConfig& config() const { return cfg_; }

  // Evaluate with the EMA shadow parameters (used for sampling after training).
  DenoiserOutput evaluate_ema(const State& x, double t) const;

 private:
  struct Ws;
  Eigen::VectorXd time_embedding(double t) const;
  DenoiserOutput run(const State& x, double t, const Eigen::VectorXd& theta, Ws* ws) const;

  StateSpace space_;
  MlpConfig cfg_;
  ParameterVector params_;
};

}  // namespace ctdd

#endif
