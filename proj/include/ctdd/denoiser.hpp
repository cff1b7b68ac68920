#ifndef CTDD_DENOISER_HPP
#define CTDD_DENOISER_HPP

#include <Eigen/Dense>
#include <memory>

#include "ctdd/enumerable.hpp"
#include "ctdd/forward_process.hpp"

namespace ctdd {

// Per-dimension categorical distributions over clean states, the sole learned
// quantity.  Rows sum to 1 and are strictly positive.
struct DenoiserOutput {
  Eigen::MatrixXd probs;  // D x S
  void check() const;
};

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
// d(loss)/d(logits) from d(loss)/d(probs) for row-wise softmax.
Eigen::MatrixXd softmax_backward_rows(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& dprobs);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual DenoiserOutput evaluate(const State& x, double t) const = 0;
  // Hot-loop variant for callers that already hold qt = fp.qt0(t); only
  // marginal-based denoisers make use of it.
  virtual DenoiserOutput evaluate_shared(const State& x, double t,
                                         const Eigen::MatrixXd& /*qt*/) const {
    return evaluate(x, t);
  }
};

// Exact q_{0|t} marginals for an enumerable data distribution; no parameters.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(EnumerableDistribution p_data, const ForwardProcess& fp);
  DenoiserOutput evaluate(const State& x, double t) const override;
  DenoiserOutput evaluate_shared(const State& x, double t,
                                 const Eigen::MatrixXd& qt) const override {
    (void)t;
    return evaluate_with(x, qt);
  }
  // Shared-marginal variant for hot loops: qt = fp.qt0(t).
  DenoiserOutput evaluate_with(const State& x, const Eigen::MatrixXd& qt) const;

 private:
  EnumerableDistribution p_data_;
  const ForwardProcess* fp_;
};

// Oracle with a fixed multiplicative perturbation of the posterior logits,
// keyed by (joint state, dimension, clean value).  Used as a generic
// non-optimal denoiser in exact tests.
class PerturbedOracleDenoiser : public Denoiser {
 public:
  PerturbedOracleDenoiser(EnumerableDistribution p_data, const ForwardProcess& fp,
                          double scale, uint64_t seed);
  DenoiserOutput evaluate(const State& x, double t) const override;

 private:
  OracleDenoiser oracle_;
  int S_;
  std::vector<double> offsets_;  // joint x D x S
  int D_;
};

// Trainable denoisers expose a workspace-based forward/backward pair used by
// the objective; evaluate() remains available for sampling.
class TrainableDenoiser : public Denoiser {
 public:
  struct Workspace {
    virtual ~Workspace() = default;
  };

  virtual std::unique_ptr<Workspace> make_workspace() const = 0;
  // Stores activations in ws; returns probabilities (and keeps logits in ws).
  virtual DenoiserOutput forward(const State& x, double t, Workspace& ws) const = 0;
  // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
  virtual void backward(const Workspace& ws, const Eigen::MatrixXd& logit_adjoint,
                        Eigen::VectorXd& grad) const = 0;
  virtual class ParameterVector& params() = 0;
  virtual const class ParameterVector& params() const = 0;
};

}  // namespace ctdd

#endif
