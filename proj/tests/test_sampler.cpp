#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ctdd/metrics.hpp"
#include "ctdd/sampler.hpp"
#include "support/oracles.hpp"

using namespace ctdd;
using ctdd::testing::random_joint_distribution;

namespace {

ForwardProcess chain(BaseRateMatrix rb, BetaSchedule sched, int D) {
  StateSpace space{rb.size(), D, true, std::nullopt};
  return ForwardProcess(space, std::move(rb), std::move(sched), 1.0);
}

}  // namespace

TEST_CASE("gillespie forward simulation") {
  SUBCASE("absorbing chains stop at the star state") {
    const auto fp = chain(BaseRateMatrix::absorbing(5, 2), BetaSchedule::constant(4.0), 1);
    Rng rng = make_stream(3, 0);
    for (int i = 0; i < 200; ++i) {
      const Trajectory traj = gillespie_forward(fp, {0}, 1.0, rng);
      bool absorbed = false;
      for (const State& x : traj.states) {
        if (absorbed) CHECK(x[0] == 2);
        if (x[0] == 2) absorbed = true;
      }
    }
  }

  SUBCASE("terminal histogram matches the analytic marginal") {
    const auto fp =
        chain(BaseRateMatrix::gaussian_ordinal(8, 2.0, 1.0), BetaSchedule::constant(1.0), 1);
    Rng rng = make_stream(3, 1);
    const double t_end = 0.6;
    Histogram h = Histogram::zeros(8);
    for (int i = 0; i < 100000; ++i) h.add(gillespie_forward(fp, {2}, t_end, rng).terminal()[0]);
    const Eigen::VectorXd row = fp.qt0(t_end).row(2).transpose();
    CHECK(hellinger(h, Histogram::from_weights(row)) <= 0.01);
  }

  SUBCASE("expected jump count is -R_b(x,x) B(t) for a two-state chain at stationarity") {
    const auto fp = chain(BaseRateMatrix::uniform(2), BetaSchedule::exponential(1.0, 4.0), 1);
    Rng rng = make_stream(3, 2);
    const double t_end = 0.8;
    const double want = fp.schedule().integral(t_end);  // -R(x,x) = 1
    double total = 0.0;
    const int n = 100000;
    std::uniform_int_distribution<int> start(0, 1);
    for (int i = 0; i < n; ++i)
      total += static_cast<double>(gillespie_forward(fp, {start(rng)}, t_end, rng).jump_count());
    CHECK(std::abs(total / n - want) <= 0.02 * want);
  }
}

TEST_CASE("tau-leap update application") {
  SUBCASE("all-zero counts leave the state unchanged") {
    State x{3, 0, 4};
    const auto outcome = apply_tau_leap_update(x, Eigen::MatrixXi::Zero(3, 5), false, 5);
    CHECK(x == State{3, 0, 4});
    CHECK(outcome.jumped == 0);
    CHECK(outcome.clamped == 0);
  }

  SUBCASE("categorical dimensions with two proposed jumps are rejected") {
    State x{2};
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(1, 4);
    counts(0, 0) = 1;
    counts(0, 3) = 1;
    const auto outcome = apply_tau_leap_update(x, counts, true, 4);
    CHECK(x == State{2});
    CHECK(outcome.rejected == 1);
    CHECK(outcome.jumped == 0);
  }

  SUBCASE("simultaneous ordinal application: one jump in dim 1, two in dim 2") {
    State x{3, 0};
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(2, 5);
    counts(0, 1) = 1;  // 3 + 1 * (1 - 3) = 1
    counts(1, 1) = 2;  // 0 + 2 * (1 - 0) = 2
    const auto outcome = apply_tau_leap_update(x, counts, false, 5);
    CHECK(x == State{1, 2});
    CHECK(outcome.jumped == 2);
    CHECK(outcome.clamped == 0);
  }

  SUBCASE("out-of-bounds ordinal proposals clamp to [0, S-1]") {
    State x{3};
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(1, 5);
    counts(0, 4) = 3;  // 3 + 3 * (4 - 3) = 6 -> clamp to 4
    const auto outcome = apply_tau_leap_update(x, counts, false, 5);
    CHECK(x == State{4});
    CHECK(outcome.clamped == 1);
  }

  SUBCASE("conditioned dimensions never move") {
    State x{1, 1};
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(2, 3);
    counts(0, 2) = 1;
    counts(1, 2) = 1;
    apply_tau_leap_update(x, counts, false, 3, ConditioningMask{1});
    CHECK(x == State{1, 2});
  }
}

TEST_CASE("tau-leap reverse sampling") {
  const auto fp =
      chain(BaseRateMatrix::gaussian_ordinal(8, 2.0, 1.0), BetaSchedule::exponential(3.0, 5.0), 2);
  const auto data = random_joint_distribution(8, 2, 42, 0.02);
  const OracleDenoiser oracle(data, fp);

  SUBCASE("denoiser-call accounting matches NFE = (T - eps)/tau") {
    TauLeapConfig cfg;
    cfg.tau = 0.011;
    cfg.epsilon = 0.01;
    const auto result = tau_leap_reverse(oracle, fp, cfg, 4, 1, ExecutionPolicy::Serial);
    CHECK(result.stats.denoiser_calls_per_chain == 90);  // ceil(0.99 / 0.011)
    CHECK(result.stats.steps.size() == 90);
    for (const auto& row : result.stats.steps) {
      CHECK(row.denoiser_calls == 1);
      CHECK(row.jump_frac >= 0.0);
      CHECK(row.jump_frac <= 1.0);
      CHECK(row.reject_frac == 0.0);
    }
  }

  SUBCASE("corrector sweeps are confined to the active window and counted") {
    TauLeapConfig cfg;
    cfg.tau = 0.03;
    cfg.epsilon = 0.01;
    cfg.corrector_count = 2;
    cfg.corrector_entry = 0.5;
    cfg.corrector_active_below = true;
    const auto result = tau_leap_reverse(oracle, fp, cfg, 4, 1, ExecutionPolicy::Serial);
    long expected = 0;
    for (const auto& row : result.stats.steps) {
      if (row.t < 0.5)
        CHECK(row.denoiser_calls == 3);
      else
        CHECK(row.denoiser_calls == 1);
      expected += row.denoiser_calls;
    }
    CHECK(result.stats.denoiser_calls_per_chain == expected);
  }

  SUBCASE("serial and parallel execution produce identical samples") {
    TauLeapConfig cfg;
    cfg.tau = 0.05;
    cfg.epsilon = 0.01;
    cfg.corrector_count = 1;
    cfg.corrector_entry = 0.3;
    const auto a = tau_leap_reverse(oracle, fp, cfg, 500, 7, ExecutionPolicy::Serial);
    const auto b = tau_leap_reverse(oracle, fp, cfg, 500, 7, ExecutionPolicy::Parallel);
    CHECK(a.samples == b.samples);
    for (size_t i = 0; i < a.stats.steps.size(); ++i) {
      CHECK(a.stats.steps[i].jump_frac == b.stats.steps[i].jump_frac);
      CHECK(a.stats.steps[i].clamp_frac == b.stats.steps[i].clamp_frac);
    }
  }

  SUBCASE("smaller tau improves the sampled distribution") {
    const int n = 20000;
    TauLeapConfig coarse;
    coarse.tau = 0.1;
    coarse.epsilon = 0.01;
    TauLeapConfig fine = coarse;
    fine.tau = 0.004;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(64);
    for (size_t i = 0; i < data.support.size(); ++i)
      p(joint_index(data.support[i], 8)) = data.probs(static_cast<long>(i));
    const auto coarse_result = tau_leap_reverse(oracle, fp, coarse, n, 11);
    const auto fine_result = tau_leap_reverse(oracle, fp, fine, n, 12);
    const double tv_coarse = tv_exact(Histogram::joint_states(coarse_result.samples, 8, 2), p);
    const double tv_fine = tv_exact(Histogram::joint_states(fine_result.samples, 8, 2), p);
    CHECK(tv_fine <= tv_coarse + 0.01);
    CHECK(tv_fine <= 0.06);
  }
}

TEST_CASE("final denoise") {
  const auto fp = chain(BaseRateMatrix::uniform(4), BetaSchedule::constant(1.0), 2);

  SUBCASE("point-mass denoiser returns that point") {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(16);
    w(joint_index({3, 1}, 4)) = 1.0;
    const OracleDenoiser oracle(EnumerableDistribution::dense(4, 2, w), fp);
    CHECK(final_denoise({0, 0}, oracle, 0.01) == State{3, 1});
  }

  SUBCASE("uniform denoiser breaks ties toward the smallest index") {
    struct Uniform : Denoiser {
      DenoiserOutput evaluate(const State&, double) const override {
        return DenoiserOutput{Eigen::MatrixXd::Constant(2, 4, 0.25)};
      }
    } uniform;
    CHECK(final_denoise({3, 2}, uniform, 0.01) == State{0, 0});
  }

  SUBCASE("deterministic given the input") {
    const auto data = random_joint_distribution(4, 2, 50);
    const OracleDenoiser oracle(data, fp);
    CHECK(final_denoise({1, 2}, oracle, 0.02) == final_denoise({1, 2}, oracle, 0.02));
  }
}

TEST_CASE("next-reaction reverse sampling") {
  SUBCASE("zero rates leave chains at their start state") {
    const auto fp = chain(BaseRateMatrix::uniform(3), BetaSchedule::constant(1.0), 2);
    const RateFn zero = [](const State&, double) {
      ReverseRateTable t;
      t.rates = Eigen::MatrixXd::Zero(2, 3);
      return t;
    };
    const auto result = next_reaction_reverse(zero, fp, 0.01, 0.01, 50, 5);
    Rng rng;
    for (int c = 0; c < 50; ++c) {
      rng = make_stream(5 ^ 0x4e455854, static_cast<uint64_t>(c));
      CHECK(result.samples[c] == fp.sample_stationary(rng));
    }
  }

  SUBCASE("exact rates recover q_eps on the tiny chain") {
    const auto fp = chain(BaseRateMatrix::uniform(4), BetaSchedule::constant(1.5), 1);
    Eigen::VectorXd p(4);
    p << 0.6, 0.2, 0.15, 0.05;
    const auto data = EnumerableDistribution::dense(4, 1, p);
    CachedExactRates rates(data, fp);
    rates.prepare(1.0, 0.01, 0.001);
    const auto result = next_reaction_reverse(rates, fp, 0.01, 0.001, 20000, 3);
    const Eigen::VectorXd want = data.marginal_at(fp, 0.01);
    const double tv = tv_exact(Histogram::joint_states(result.samples, 4, 1), want);
    CHECK(tv <= 0.03);
  }

  SUBCASE("halving the integration step barely changes the terminal law") {
    const auto fp = chain(BaseRateMatrix::uniform(4), BetaSchedule::constant(1.5), 1);
    Eigen::VectorXd p(4);
    p << 0.5, 0.25, 0.15, 0.1;
    const auto data = EnumerableDistribution::dense(4, 1, p);
    const Eigen::VectorXd want = data.marginal_at(fp, 0.01);
    double tv[2];
    int i = 0;
    for (double h : {0.002, 0.001}) {
      CachedExactRates rates(data, fp);
      rates.prepare(1.0, 0.01, h);
      const auto result = next_reaction_reverse(rates, fp, 0.01, h, 30000, 9);
      tv[i++] = tv_exact(Histogram::joint_states(result.samples, 4, 1), want);
    }
    CHECK(std::abs(tv[0] - tv[1]) < 0.005);
  }

  SUBCASE("diverging rates are reported") {
    const auto fp = chain(BaseRateMatrix::uniform(3), BetaSchedule::constant(1.0), 1);
    const RateFn huge = [](const State&, double) {
      ReverseRateTable t;
      t.rates = Eigen::MatrixXd::Constant(1, 3, 1e15);
      return t;
    };
    CHECK_THROWS_AS(next_reaction_reverse(huge, fp, 0.01, 0.01, 2, 5), std::runtime_error);
  }

  SUBCASE("serial and parallel execution agree") {
    const auto fp = chain(BaseRateMatrix::uniform(4), BetaSchedule::constant(1.0), 2);
    const auto data = random_joint_distribution(4, 2, 60);
    CachedExactRates rates(data, fp);
    rates.prepare(1.0, 0.05, 0.01);
    const auto a =
        next_reaction_reverse(rates, fp, 0.05, 0.01, 300, 8, 1e12, ExecutionPolicy::Serial);
    const auto b =
        next_reaction_reverse(rates, fp, 0.05, 0.01, 300, 8, 1e12, ExecutionPolicy::Parallel);
    CHECK(a.samples == b.samples);
  }
}

TEST_CASE("corrector sweeps preserve the exact marginal") {
  const auto fp = chain(BaseRateMatrix::uniform(4), BetaSchedule::constant(1.0), 1);
  const auto data = random_joint_distribution(4, 1, 71);
  const OracleDenoiser oracle(data, fp);
  const double t = 0.4;
  const Eigen::VectorXd qt_marg = data.marginal_at(fp, t);
  const Eigen::MatrixXd qt = fp.qt0(t);
  const double beta = fp.schedule().beta(t);

  const int n = 100000;
  std::vector<State> chains(n);
  Rng init = make_stream(80, 0);
  for (int c = 0; c < n; ++c) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(init), acc = 0.0;
    int pick = 3;
    for (int s = 0; s < 4; ++s) {
      acc += qt_marg(s);
      if (u <= acc) {
        pick = s;
        break;
      }
    }
    chains[c] = State{pick};
  }
  const double tv_before = tv_exact(Histogram::joint_states(chains, 4, 1), qt_marg);

  const double tau_c = 0.02;
  std::vector<Rng> streams;
  for (int c = 0; c < n; ++c) streams.push_back(make_stream(81, static_cast<uint64_t>(c)));
  for (int sweep = 0; sweep < 100; ++sweep) {
    for (int c = 0; c < n; ++c) {
      const DenoiserOutput out = oracle.evaluate_with(chains[c], qt);
      const ReverseRateTable table = corrector_rates_with(chains[c], qt, beta, out, fp);
      Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(1, 4);
      for (int s = 0; s < 4; ++s) {
        if (s == chains[c][0] || table.rates(0, s) <= 0.0) continue;
        std::poisson_distribution<int> pois(tau_c * table.rates(0, s));
        counts(0, s) = pois(streams[c]);
      }
      apply_tau_leap_update(chains[c], counts, true, 4);
    }
  }
  const double tv_after = tv_exact(Histogram::joint_states(chains, 4, 1), qt_marg);
  CHECK(tv_after <= tv_before + 0.01);
  CHECK(tv_after <= 0.02);
}

TEST_CASE("categorical rejection stays rare with a uniform rate") {
  StateSpace space{16, 8, false, std::nullopt};
  ForwardProcess fp(space, BaseRateMatrix::uniform(16), BetaSchedule::constant(0.3), 1.0);
  const auto corpus = ctdd::testing::toy_sequence_corpus(32, 8, 16, 5);
  std::vector<State> support = corpus;
  const auto data =
      EnumerableDistribution::from_points(support, Eigen::VectorXd::Ones(corpus.size()));
  const OracleDenoiser oracle(data, fp);

  TauLeapConfig cfg;
  cfg.tau = 0.01;
  cfg.epsilon = 0.01;
  cfg.reject_multi_jump = true;
  const auto result = tau_leap_reverse(oracle, fp, cfg, 300, 17);
  double mean_reject = 0.0;
  for (const auto& row : result.stats.steps) mean_reject += row.reject_frac;
  mean_reject /= static_cast<double>(result.stats.steps.size());
  CHECK(mean_reject <= 0.01);
}
