#include "ctdd/rate_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ctdd/rng.hpp"

namespace ctdd {

std::string rate_kind_name(RateKind kind) {
  switch (kind) {
    case RateKind::Uniform: return "uniform";
    case RateKind::Absorbing: return "absorbing";
    case RateKind::BirthDeath: return "birth_death";
    case RateKind::GaussianOrdinal: return "gaussian_ordinal";
  }
  return "unknown";
}

RateKind rate_kind_from_name(const std::string& name) {
  if (name == "uniform") return RateKind::Uniform;
  if (name == "absorbing") return RateKind::Absorbing;
  if (name == "birth_death") return RateKind::BirthDeath;
  if (name == "gaussian_ordinal") return RateKind::GaussianOrdinal;
  throw std::invalid_argument("unknown rate kind: " + name);
}

void StateSpace::validate() const {
  if (S < 2) throw std::invalid_argument("invalid state space: S must be >= 2");
  if (D < 1) throw std::invalid_argument("invalid state space: D must be >= 1");
  if (permutation) {
    if (static_cast<int>(permutation->size()) != S)
      throw std::invalid_argument("invalid state space: permutation size != S");
    std::vector<char> seen(S, 0);
    for (int v : *permutation) {
      if (v < 0 || v >= S || seen[v])
        throw std::invalid_argument("invalid state space: permutation is not a bijection");
      seen[v] = 1;
    }
    if (ordinal)
      throw std::invalid_argument(
          "invalid state space: scrambling permutation is only meaningful for categorical data");
  }
}

std::vector<int> StateSpace::inverse_permutation() const {
  if (!permutation) throw std::logic_error("state space has no permutation");
  std::vector<int> inv(S);
  for (int i = 0; i < S; ++i) inv[(*permutation)[i]] = i;
  return inv;
}

std::vector<int> StateSpace::random_permutation(int S, uint64_t seed) {
  std::vector<int> perm(S);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_stream(seed, /*stream=*/0xC0DE);
  for (int i = S - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  return perm;
}

void validate_rate_matrix(const Eigen::MatrixXd& R) {
  const int S = static_cast<int>(R.rows());
  if (R.cols() != S || S < 2) throw std::invalid_argument("rate matrix must be square, S >= 2");
  const double scale = R.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * std::max(scale, 1.0);
  for (int i = 0; i < S; ++i) {
    if (R(i, i) > tol) throw std::invalid_argument("rate matrix: diagonal entries must be <= 0");
    double row_sum = 0.0;
    for (int j = 0; j < S; ++j) {
      if (j != i && R(i, j) < -tol)
        throw std::invalid_argument("rate matrix: off-diagonal entries must be >= 0");
      row_sum += R(i, j);
    }
    if (std::abs(row_sum) > tol)
      throw std::invalid_argument("rate matrix: rows must sum to zero");
  }
}

BaseRateMatrix::BaseRateMatrix(Eigen::MatrixXd entries, RateKind kind, Eigen::VectorXd stationary)
    : entries_(std::move(entries)), kind_(kind), stationary_(std::move(stationary)) {
  validate_rate_matrix(entries_);
}

BaseRateMatrix BaseRateMatrix::uniform(int S) {
  if (S < 2) throw std::invalid_argument("invalid state space: uniform rate needs S >= 2");
  Eigen::MatrixXd R = Eigen::MatrixXd::Ones(S, S);
  R.diagonal().setConstant(1.0 - S);
  return BaseRateMatrix(std::move(R), RateKind::Uniform,
                        Eigen::VectorXd::Constant(S, 1.0 / S));
}

BaseRateMatrix BaseRateMatrix::absorbing(int S, int star) {
  if (S < 2) throw std::invalid_argument("invalid state space: absorbing rate needs S >= 2");
  if (star < 0 || star >= S)
    throw std::invalid_argument("invalid state: absorbing state index out of range");
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(S, S);
  for (int i = 0; i < S; ++i) {
    if (i == star) continue;
    R(i, star) = 1.0;
    R(i, i) = -1.0;
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(S);
  p(star) = 1.0;
  return BaseRateMatrix(std::move(R), RateKind::Absorbing, std::move(p));
}

BaseRateMatrix BaseRateMatrix::birth_death(int S, double lambda) {
  if (S < 2) throw std::invalid_argument("invalid state space: birth/death rate needs S >= 2");
  if (!(lambda > 0.0)) throw std::invalid_argument("invalid rate: birth/death lambda must be > 0");
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(S, S);
  for (int i = 0; i < S; ++i) {
    if (i > 0) R(i, i - 1) = lambda;
    if (i < S - 1) R(i, i + 1) = lambda;
    R(i, i) = -(R.row(i).sum() - R(i, i));
  }
  return BaseRateMatrix(std::move(R), RateKind::BirthDeath,
                        Eigen::VectorXd::Constant(S, 1.0 / S));
}

BaseRateMatrix BaseRateMatrix::gaussian_ordinal(int S, double sigma0, double sigma_r) {
  if (S < 2) throw std::invalid_argument("invalid state space: gaussian rate needs S >= 2");
  if (!(sigma0 > 0.0) || !(sigma_r > 0.0))
    throw std::invalid_argument("invalid parameter: gaussian rate needs positive sigmas");

  const double mu0 = 0.5 * (S - 1);
  Eigen::VectorXd p(S);
  for (int i = 0; i < S; ++i) p(i) = std::exp(-((i - mu0) * (i - mu0)) / (2.0 * sigma0 * sigma0));
  p /= p.sum();

  // Each unordered pair {a, b}, a < b, carries one designated entry whose
  // value is exp(-i^2 / sigma_r^2) with i the distance from the unit entry
  // next to the diagonal; the mirrored entry is forced by detailed balance.
  // Pairs on or above the anti-diagonal are designated in the upper triangle
  // (row a looks right of its '1' at a+1), the rest in the lower triangle
  // (row b looks left of its '1' at b-1).  Odd S leaves the center row fully
  // forced, which is the mirror-symmetric completion.
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(S, S);
  for (int a = 0; a < S; ++a) {
    for (int b = a + 1; b < S; ++b) {
      if (a + b <= S - 1) {
        const double dist = b - (a + 1);
        R(a, b) = std::exp(-(dist * dist) / (sigma_r * sigma_r));
        R(b, a) = R(a, b) * p(a) / p(b);
      } else {
        const double dist = (b - 1) - a;
        R(b, a) = std::exp(-(dist * dist) / (sigma_r * sigma_r));
        R(a, b) = R(b, a) * p(b) / p(a);
      }
    }
  }
  for (int i = 0; i < S; ++i) R(i, i) = -(R.row(i).sum() - R(i, i));
  return BaseRateMatrix(std::move(R), RateKind::GaussianOrdinal, std::move(p));
}

SpectralDecomposition BaseRateMatrix::decompose() const {
  const int S = size();
  SpectralDecomposition dec;

  if (reversible()) {
    // diag(sqrt p) R diag(1/sqrt p) is symmetric under detailed balance.
    Eigen::VectorXd sqrt_p = stationary_.cwiseSqrt();
    Eigen::MatrixXd sym = sqrt_p.asDiagonal() * entries_ *
                          sqrt_p.cwiseInverse().asDiagonal();
    sym = 0.5 * (sym + sym.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("decomposition failed: symmetric eigensolve did not converge");
    dec.eigenvalues = solver.eigenvalues();
    dec.Q = sqrt_p.cwiseInverse().asDiagonal() * solver.eigenvectors();
    dec.Qinv = solver.eigenvectors().transpose() * sqrt_p.asDiagonal();
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(entries_);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("decomposition failed: general eigensolve did not converge");
    const double imag_norm = solver.eigenvalues().imag().cwiseAbs().maxCoeff();
    if (imag_norm > 1e-9 * std::max(1.0, entries_.cwiseAbs().maxCoeff()))
      throw std::runtime_error("decomposition failed: complex spectrum");
    dec.eigenvalues = solver.eigenvalues().real();
    dec.Q = solver.eigenvectors().real();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(dec.Q);
    if (!lu.isInvertible())
      throw std::runtime_error("decomposition failed: eigenvector matrix is singular");
    dec.Qinv = lu.inverse();
  }

  // exp(lambda B(t)) must preserve the stationary direction exactly.
  const double snap = 1e-9 * std::max(1.0, dec.eigenvalues.cwiseAbs().maxCoeff());
  int zeros = 0;
  for (int i = 0; i < S; ++i) {
    if (std::abs(dec.eigenvalues(i)) <= snap) {
      dec.eigenvalues(i) = 0.0;
      ++zeros;
    } else if (dec.eigenvalues(i) > 0.0) {
      throw std::runtime_error("decomposition failed: positive eigenvalue");
    }
  }
  if (zeros != 1)
    throw std::runtime_error("decomposition failed: stationary eigenvalue is not unique");

  const Eigen::MatrixXd recon = dec.Q * dec.eigenvalues.asDiagonal() * dec.Qinv;
  const double err = (recon - entries_).cwiseAbs().maxCoeff();
  if (err > 1e-9 * std::max(1.0, entries_.cwiseAbs().maxCoeff()))
    throw std::runtime_error("decomposition failed: reconstruction error above tolerance");
  return dec;
}

}  // namespace ctdd
