#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ctdd/rate_matrix.hpp"
#include "ctdd/schedule.hpp"
#include "support/oracles.hpp"

using namespace ctdd;

TEST_CASE("uniform rate matrix") {
  const auto rb = BaseRateMatrix::uniform(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(rb(i, j) == (i == j ? -2.0 : 1.0));
  for (int i = 0; i < 3; ++i) CHECK(rb.entries().row(i).sum() == doctest::Approx(0.0));

  const auto rb2 = BaseRateMatrix::uniform(2);
  CHECK(rb2(0, 0) == -1.0);
  CHECK(rb2(0, 1) == 1.0);
  CHECK(rb2(1, 0) == 1.0);
  CHECK(rb2(1, 1) == -1.0);

  const auto rb5 = BaseRateMatrix::uniform(5);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 0.2);
  CHECK((u.transpose() * rb5.entries()).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(BaseRateMatrix::uniform(1), std::invalid_argument);
}

TEST_CASE("birth/death rate matrix") {
  const auto rb = BaseRateMatrix::birth_death(3, 1.0);
  Eigen::MatrixXd want(3, 3);
  want << -1, 1, 0, 1, -2, 1, 0, 1, -1;
  CHECK((rb.entries() - want).cwiseAbs().maxCoeff() == 0.0);

  for (int S : {2, 5, 9, 17}) {
    const auto r = BaseRateMatrix::birth_death(S, 0.7);
    for (int i = 0; i < S; ++i) CHECK(std::abs(r.entries().row(i).sum()) < 1e-14);
  }

  const auto rb4 = BaseRateMatrix::birth_death(4, 2.0);
  CHECK((rb4.entries() - rb4.entries().transpose()).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(4, 0.25);
  CHECK((u.transpose() * rb4.entries()).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(BaseRateMatrix::birth_death(4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(BaseRateMatrix::birth_death(4, -1.0), std::invalid_argument);
}

TEST_CASE("absorbing rate matrix") {
  const auto rb = BaseRateMatrix::absorbing(3, 2);
  Eigen::MatrixXd want(3, 3);
  want << -1, 0, 1, 0, -1, 1, 0, 0, 0;
  CHECK((rb.entries() - want).cwiseAbs().maxCoeff() == 0.0);
  CHECK(rb.entries().row(2).cwiseAbs().maxCoeff() == 0.0);

  // stationary distribution is the point mass at the absorbing state, and the
  // eigensolve confirms a unique zero eigenvalue
  CHECK(rb.stationary()(2) == 1.0);
  CHECK((rb.stationary().transpose() * rb.entries()).cwiseAbs().maxCoeff() == 0.0);
  const auto dec = rb.decompose();
  int zeros = 0;
  for (int i = 0; i < 3; ++i)
    if (dec.eigenvalues(i) == 0.0) ++zeros;
  CHECK(zeros == 1);

  CHECK_THROWS_AS(BaseRateMatrix::absorbing(3, 3), std::invalid_argument);
  CHECK_THROWS_AS(BaseRateMatrix::absorbing(3, -1), std::invalid_argument);
}

TEST_CASE("gaussian ordinal rate matrix") {
  SUBCASE("detailed balance at the toy parameters") {
    const auto rb = BaseRateMatrix::gaussian_ordinal(8, 8.0, 1.0);
    const Eigen::VectorXd& p = rb.stationary();
    double worst = 0.0;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        if (i != j) worst = std::max(worst, std::abs(p(i) * rb(i, j) - p(j) * rb(j, i)));
    CHECK(worst <= 1e-10);
  }

  SUBCASE("wide sigmas approach the uniform matrix up to scale") {
    const auto rb = BaseRateMatrix::gaussian_ordinal(6, 1e9, 1e9);
    const auto uni = BaseRateMatrix::uniform(6);
    CHECK((rb.entries() - uni.entries()).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("stationarity at S=16") {
    const auto rb = BaseRateMatrix::gaussian_ordinal(16, 4.0, 2.0);
    CHECK((rb.stationary().transpose() * rb.entries()).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SUBCASE("odd S uses the mirror-symmetric completion") {
    const auto rb = BaseRateMatrix::gaussian_ordinal(7, 3.0, 1.5);
    const Eigen::VectorXd& p = rb.stationary();
    double worst = 0.0;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        if (i != j) worst = std::max(worst, std::abs(p(i) * rb(i, j) - p(j) * rb(j, i)));
    CHECK(worst <= 1e-10);
    // unit entries hug the diagonal: top half to the right, bottom half left
    CHECK(rb(0, 1) == 1.0);
    CHECK(rb(2, 3) == 1.0);
    CHECK(rb(4, 3) == 1.0);
    CHECK(rb(6, 5) == 1.0);
  }

  CHECK_THROWS_AS(BaseRateMatrix::gaussian_ordinal(8, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(BaseRateMatrix::gaussian_ordinal(8, 1.0, -2.0), std::invalid_argument);
}

TEST_CASE("spectral decomposition") {
  SUBCASE("uniform S=3 eigenvalues are {0, -3, -3}") {
    const auto dec = BaseRateMatrix::uniform(3).decompose();
    Eigen::VectorXd ev = dec.eigenvalues;
    std::sort(ev.data(), ev.data() + ev.size());
    CHECK(ev(0) == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(ev(1) == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(ev(2) == 0.0);
  }

  SUBCASE("birth/death S=2 eigenvalues are {0, -2}") {
    const auto dec = BaseRateMatrix::birth_death(2, 1.0).decompose();
    Eigen::VectorXd ev = dec.eigenvalues;
    std::sort(ev.data(), ev.data() + ev.size());
    CHECK(ev(0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(ev(1) == 0.0);
  }

  SUBCASE("gaussian ordinal S=8: real spectrum, one zero, rest negative") {
    const auto dec = BaseRateMatrix::gaussian_ordinal(8, 8.0, 1.0).decompose();
    int zeros = 0;
    for (int i = 0; i < 8; ++i) {
      if (dec.eigenvalues(i) == 0.0)
        ++zeros;
      else
        CHECK(dec.eigenvalues(i) < 0.0);
    }
    CHECK(zeros == 1);
  }

  SUBCASE("reconstruction identity across kinds and sizes") {
    for (int S : {2, 3, 5, 8, 16, 33, 64}) {
      std::vector<BaseRateMatrix> mats;
      mats.push_back(BaseRateMatrix::uniform(S));
      mats.push_back(BaseRateMatrix::birth_death(S, 1.3));
      mats.push_back(BaseRateMatrix::absorbing(S, S - 1));
      mats.push_back(BaseRateMatrix::gaussian_ordinal(S, S / 4.0 + 0.5, 1.0));
      for (const auto& rb : mats) {
        const auto dec = rb.decompose();
        const Eigen::MatrixXd recon = dec.Q * dec.eigenvalues.asDiagonal() * dec.Qinv;
        const double scale = std::max(1.0, rb.entries().cwiseAbs().maxCoeff());
        CHECK((recon - rb.entries()).cwiseAbs().maxCoeff() <= 1e-9 * scale);
      }
    }
  }
}

TEST_CASE("rate matrix validation rejects corrupted input") {
  Eigen::MatrixXd bad = BaseRateMatrix::uniform(3).entries();
  bad(0, 0) += 0.1;  // row sum now 0.1
  CHECK_THROWS_AS(validate_rate_matrix(bad), std::invalid_argument);

  Eigen::MatrixXd neg = BaseRateMatrix::uniform(3).entries();
  neg(0, 1) = -0.5;
  neg(0, 0) = 1.5 - 2.0 + 0.5;  // keep the row sum at zero
  neg(0, 0) = -0.5;
  neg(0, 2) = 1.0;
  CHECK_THROWS_AS(validate_rate_matrix(neg), std::invalid_argument);
}

TEST_CASE("beta schedules") {
  SUBCASE("exponential closed form matches quadrature") {
    const auto sched = BetaSchedule::exponential(5.0, 5.0);
    for (double t : {0.0, 0.5, 1.0}) {
      CHECK(sched.integral(t) == doctest::Approx(5.0 * std::pow(5.0, t) - 5.0).epsilon(1e-15));
      // composite Simpson quadrature oracle
      const int n = 2000;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double a = t * i / n, b = t * (i + 1) / n;
        acc += (b - a) / 6.0 *
               (sched.beta(a) + 4.0 * sched.beta(0.5 * (a + b)) + sched.beta(b));
      }
      CHECK(std::abs(acc - sched.integral(t)) <= 1e-10 * std::max(1.0, sched.integral(t)));
    }
  }

  SUBCASE("positivity and monotonicity") {
    for (const auto& sched :
         {BetaSchedule::constant(0.03), BetaSchedule::exponential(3.0, 100.0)}) {
      double prev = 0.0;
      CHECK(sched.integral(0.0) == 0.0);
      for (double t = 0.05; t <= 1.0; t += 0.05) {
        CHECK(sched.beta(t) > 0.0);
        CHECK(sched.integral(t) > prev);
        prev = sched.integral(t);
        CHECK(sched.inverse_integral(sched.integral(t)) == doctest::Approx(t).epsilon(1e-12));
      }
    }
  }

  CHECK_THROWS_AS(BetaSchedule::constant(0.0), std::invalid_argument);
  CHECK_THROWS_AS(BetaSchedule::exponential(1.0, 0.5), std::invalid_argument);
}

TEST_CASE("state space validation") {
  StateSpace ok{4, 2, false, std::vector<int>{2, 0, 3, 1}};
  ok.validate();
  const auto inv = ok.inverse_permutation();
  for (int i = 0; i < 4; ++i) CHECK(inv[(*ok.permutation)[i]] == i);

  StateSpace dup{4, 2, false, std::vector<int>{2, 0, 2, 1}};
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
  StateSpace scrambled_ordinal{4, 2, true, std::vector<int>{2, 0, 3, 1}};
  CHECK_THROWS_AS(scrambled_ordinal.validate(), std::invalid_argument);

  const auto perm = StateSpace::random_permutation(16, 99);
  std::vector<char> seen(16, 0);
  for (int v : perm) {
    CHECK(!seen[v]);
    seen[v] = 1;
  }
}
