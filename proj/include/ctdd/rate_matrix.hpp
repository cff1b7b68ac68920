#ifndef CTDD_RATE_MATRIX_HPP
#define CTDD_RATE_MATRIX_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace ctdd {

enum class RateKind { Uniform, Absorbing, BirthDeath, GaussianOrdinal };

std::string rate_kind_name(RateKind kind);
RateKind rate_kind_from_name(const std::string& name);

// State space descriptor shared by every module.  States are integers
// 0..S-1.  The optional permutation is a bijection on 0..S-1 applied to
// categorical data at ingestion (and inverted when writing samples back out).
struct StateSpace {
  int S = 2;
  int D = 1;
  bool ordinal = true;
  std::optional<std::vector<int>> permutation;

  void validate() const;
  std::vector<int> inverse_permutation() const;

  static std::vector<int> random_permutation(int S, uint64_t seed);
};

struct SpectralDecomposition {
  Eigen::MatrixXd Q;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd Qinv;
};

// Throws std::invalid_argument unless off-diagonals are >= 0, diagonals <= 0
// and every row sums to zero within 1e-12 * max|entry|.
void validate_rate_matrix(const Eigen::MatrixXd& R);

// Base generator R_b of the forward chain.  The time scaling beta(t) is kept
// in the schedule so any fixed R_b yields a commuting family R_t = beta(t) R_b.
class BaseRateMatrix {
 public:
  static BaseRateMatrix uniform(int S);
  static BaseRateMatrix absorbing(int S, int star);
  static BaseRateMatrix birth_death(int S, double lambda);
  static BaseRateMatrix gaussian_ordinal(int S, double sigma0, double sigma_r);

  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }
  int size() const { return static_cast<int>(entries_.rows()); }
  RateKind kind() const { return kind_; }
  bool reversible() const { return kind_ != RateKind::Absorbing; }

  // Stationary distribution p_ref: uniform for the uniform and birth/death
  // kinds, the discretized Gaussian for gaussian_ordinal and the point mass
  // at the absorbing state.
  const Eigen::VectorXd& stationary() const { return stationary_; }

  // R_b = Q diag(lambda) Q^-1.  Reversible kinds are solved on the
  // symmetrized matrix diag(sqrt p) R_b diag(1/sqrt p); the absorbing kind
  // uses a general eigensolve.  Eigenvalues within 1e-9 of zero are snapped
  // to zero; a reconstruction error above 1e-9 * max|R_b| throws.
  SpectralDecomposition decompose() const;

 private:
  BaseRateMatrix(Eigen::MatrixXd entries, RateKind kind, Eigen::VectorXd stationary);
  Eigen::MatrixXd entries_;
  RateKind kind_;
  Eigen::VectorXd stationary_;
};

}  // namespace ctdd

#endif
