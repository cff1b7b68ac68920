#ifndef CTDD_PARAMETERS_HPP
#define CTDD_PARAMETERS_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ctdd {

struct ParamSegment {
  std::string name;
  long offset = 0;
  std::vector<long> shape;
  long size = 0;
};

// Flat parameter storage with named segments and an EMA shadow copy.
class ParameterVector {
 public:
  long add_segment(const std::string& name, std::vector<long> shape);
  void finalize(double ema_decay);

  long size() const { return values_.size(); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& ema() { return ema_; }
  const Eigen::VectorXd& ema() const { return ema_; }
  double ema_decay() const { return ema_decay_; }

  const std::vector<ParamSegment>& segments() const { return segments_; }
  const ParamSegment& segment(const std::string& name) const;
  Eigen::Map<Eigen::VectorXd> view(const std::string& name);
  Eigen::Map<const Eigen::VectorXd> view(const std::string& name) const;

  // ema <- decay * ema + (1 - decay) * values
  void update_ema();
  void reset_ema_to_values();
  void check_finite() const;

 private:
  std::vector<ParamSegment> segments_;
  Eigen::VectorXd values_;
  Eigen::VectorXd ema_;
  double ema_decay_ = 0.9999;
  long total_ = 0;
  bool finalized_ = false;
};

// Adam with linear learning-rate warmup and global gradient-norm clipping.
class AdamOptimizer {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long warmup_steps = 5000;
    double clip_norm = 1.0;  // <= 0 disables clipping
  };

  explicit AdamOptimizer(long size, Options opts);
  void step(ParameterVector& params, Eigen::VectorXd grad);
  long steps_taken() const { return step_; }
  double last_grad_norm() const { return last_grad_norm_; }
  const Options& options() const { return opts_; }

  // Optimizer state round-trip for resumable checkpoints.
  Eigen::VectorXd state_m() const { return m_; }
  Eigen::VectorXd state_v() const { return v_; }
  void restore(long step, Eigen::VectorXd m, Eigen::VectorXd v);

 private:
  Options opts_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long step_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace ctdd

#endif
