#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ctdd/mlp_denoiser.hpp"
#include "ctdd/objective.hpp"
#include "ctdd/reverse_rates.hpp"
#include "ctdd/tabular_denoiser.hpp"
#include "support/oracles.hpp"

using namespace ctdd;
using ctdd::testing::random_joint_distribution;

namespace {

ForwardProcess toy_fp(int S, int D) {
  StateSpace space{S, D, true, std::nullopt};
  return ForwardProcess(space, BaseRateMatrix::gaussian_ordinal(S, S / 4.0 + 0.5, 1.0),
                        BetaSchedule::exponential(3.0, 5.0));
}

void randomize(ParameterVector& params, uint64_t seed, double scale = 0.5) {
  Rng rng = make_stream(seed, 0xBEEF);
  std::normal_distribution<double> dist(0.0, scale);
  for (long i = 0; i < params.size(); ++i) params.values()(i) = dist(rng);
}

}  // namespace

TEST_CASE("oracle denoiser") {
  const auto fp = toy_fp(5, 2);
  const auto data = random_joint_distribution(5, 2, 31);
  const OracleDenoiser oracle(data, fp);

  SUBCASE("rows sum to one and stay positive") {
    Rng rng = make_stream(1, 1);
    for (int i = 0; i < 50; ++i) {
      std::uniform_int_distribution<int> pick(0, 4);
      const State x{pick(rng), pick(rng)};
      std::uniform_real_distribution<double> times(0.01, 1.0);
      const DenoiserOutput out = oracle.evaluate(x, times(rng));
      out.check();
    }
  }

  SUBCASE("small t concentrates the posterior on the matching clean state") {
    const State x{3, 1};
    const DenoiserOutput out = oracle.evaluate(x, 1e-5);
    CHECK(out.probs(0, 3) >= 0.999);
    CHECK(out.probs(1, 1) >= 0.999);
  }

  SUBCASE("large t with the uniform kind recovers the data marginals") {
    StateSpace space{5, 2, true, std::nullopt};
    ForwardProcess fpu(space, BaseRateMatrix::uniform(5), BetaSchedule::constant(12.0));
    const OracleDenoiser ou(data, fpu);
    Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(2, 5);
    for (size_t i = 0; i < data.support.size(); ++i)
      for (int d = 0; d < 2; ++d)
        marg(d, data.support[i][d]) += data.probs(static_cast<long>(i));
    const DenoiserOutput out = ou.evaluate({0, 4}, 1.0);
    CHECK((out.probs - marg).cwiseAbs().maxCoeff() < 1e-8);
  }

  SUBCASE("plugged into the reverse rates it reproduces the exact table") {
    for (double t : {0.1, 0.45, 0.9}) {
      Rng rng = make_stream(2, 2);
      std::uniform_int_distribution<int> pick(0, 4);
      for (int rep = 0; rep < 10; ++rep) {
        const State x{pick(rng), pick(rng)};
        const auto via_model = model_reverse_rates(x, t, oracle.evaluate(x, t), fp);
        const auto exact = exact_reverse_rates(x, t, data, fp);
        CHECK((via_model.rates - exact.rates).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("tabular denoiser") {
  StateSpace space{4, 1, true, std::nullopt};
  TabularDenoiser tab(space, 64, 0.01, 1.0, 0.5);

  SUBCASE("zero logits give uniform rows") {
    const DenoiserOutput out = tab.evaluate({2}, 0.5);
    for (int s = 0; s < 4; ++s) CHECK(out.probs(0, s) == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("time bins cover [epsilon, T]") {
    CHECK(tab.time_bin(0.01) == 0);
    CHECK(tab.time_bin(1.0) == 63);
    CHECK(tab.time_bin(0.005) == 0);
    CHECK(tab.time_bin(2.0) == 63);
  }

  SUBCASE("cross-entropy gradient at one cell is softmax minus one-hot") {
    randomize(tab.params(), 9);
    auto ws = tab.make_workspace();
    const State x{1};
    const double t = 0.37;
    const DenoiserOutput out = tab.forward(x, t, *ws);
    const int target = 3;
    Eigen::MatrixXd dprobs = Eigen::MatrixXd::Zero(1, 4);
    dprobs(0, target) = -1.0 / out.probs(0, target);
    const Eigen::MatrixXd dlogits = softmax_backward_rows(out.probs, dprobs);
    for (int s = 0; s < 4; ++s)
      CHECK(dlogits(0, s) ==
            doctest::Approx(out.probs(0, s) - (s == target ? 1.0 : 0.0)).epsilon(1e-12));

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(tab.params().size());
    tab.backward(*ws, dlogits, grad);
    const long base = tab.cell_offset(tab.time_bin(t), 1, 0);
    for (long i = 0; i < grad.size(); ++i) {
      if (i >= base && i < base + 4)
        CHECK(grad(i) == dlogits(0, i - base));
      else
        CHECK(grad(i) == 0.0);
    }
  }

  SUBCASE("zero upstream adjoint gives a zero gradient") {
    randomize(tab.params(), 10);
    auto ws = tab.make_workspace();
    tab.forward({0}, 0.2, *ws);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(tab.params().size());
    tab.backward(*ws, Eigen::MatrixXd::Zero(1, 4), grad);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mlp denoiser") {
  StateSpace space{32, 2, true, std::nullopt};
  MlpConfig cfg;
  cfg.init_seed = 5;
  MlpDenoiser mlp(space, cfg);

  SUBCASE("fresh model outputs uniform rows (zero-initialized output layer)") {
    const DenoiserOutput out = mlp.evaluate({7, 30}, 0.5);
    CHECK(out.probs.rows() == 2);
    CHECK(out.probs.cols() == 32);
    for (int d = 0; d < 2; ++d)
      for (int s = 0; s < 32; ++s)
        CHECK(out.probs(d, s) == doctest::Approx(1.0 / 32).epsilon(1e-12));
  }

  SUBCASE("deterministic: equal inputs agree bit-exactly") {
    randomize(mlp.params(), 77, 0.3);
    const DenoiserOutput a = mlp.evaluate({4, 9}, 0.613);
    const DenoiserOutput b = mlp.evaluate({4, 9}, 0.613);
    CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("output shape is D x S = 2 x 32") {
    CHECK(mlp.params().segment("out.b").size == 64);
  }

  SUBCASE("non-finite activations are reported") {
    randomize(mlp.params(), 3, 0.3);
    mlp.params().values()(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(mlp.evaluate({0, 0}, 0.5), std::runtime_error);
  }
}

TEST_CASE("mlp gradient matches central finite differences") {
  const auto fp = toy_fp(6, 2);
  StateSpace space{6, 2, true, std::nullopt};
  const auto data = random_joint_distribution(6, 2, 55);
  MlpConfig cfg;
  cfg.hidden_width = 8;
  cfg.blocks = 2;
  cfg.block_hidden = 12;
  cfg.time_embed_dim = 8;
  cfg.time_hidden = 8;
  cfg.time_out = 16;

  ObjectiveOptions opts;
  opts.variant = CtVariant::OnePass;
  opts.lambda_aux = 0.3;

  int failures = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    MlpConfig c = cfg;
    c.init_seed = seed;
    MlpDenoiser mlp(space, c);
    randomize(mlp.params(), seed * 13 + 1, 0.4);

    Eigen::VectorXd grad;
    loss_mc_grad(data, mlp, fp, opts, /*batch=*/2, /*seed=*/seed, /*step=*/0, grad, false);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (long i = 0; i < mlp.params().size(); i += 7) {
      const double save = mlp.params().values()(i);
      mlp.params().values()(i) = save + h;
      const double up = loss_mc_value(data, mlp, fp, opts, 2, seed, 0).total;
      mlp.params().values()(i) = save - h;
      const double down = loss_mc_value(data, mlp, fp, opts, 2, seed, 0).total;
      mlp.params().values()(i) = save;
      const double fd = (up - down) / (2.0 * h);
      const double rel =
          std::abs(fd - grad(i)) / std::max({std::abs(fd), std::abs(grad(i)), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
    if (max_rel > 1e-4) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("parameter vector and EMA") {
  ParameterVector params;
  params.add_segment("a", {3});
  params.add_segment("b", {2, 2});
  params.finalize(0.5);
  CHECK(params.size() == 7);
  CHECK(params.segment("b").offset == 3);

  params.values().setConstant(2.0);
  params.update_ema();
  CHECK(params.ema()(0) == doctest::Approx(1.0));

  SUBCASE("decay 0 tracks the parameters exactly") {
    ParameterVector p;
    p.add_segment("w", {4});
    p.finalize(0.0);
    p.values().setConstant(3.0);
    p.update_ema();
    CHECK((p.ema() - p.values()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("decay 1 never updates") {
    ParameterVector p;
    p.add_segment("w", {4});
    p.finalize(1.0);
    p.values().setConstant(3.0);
    p.update_ema();
    CHECK(p.ema().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam optimizer warmup and clipping") {
  ParameterVector params;
  params.add_segment("w", {4});
  params.finalize(0.9);
  AdamOptimizer::Options opts;
  opts.lr = 0.1;
  opts.warmup_steps = 10;
  opts.clip_norm = 1.0;
  AdamOptimizer adam(4, opts);

  Eigen::VectorXd grad = Eigen::VectorXd::Constant(4, 10.0);  // norm 20, clipped to 1
  adam.step(params, grad);
  CHECK(adam.last_grad_norm() == doctest::Approx(20.0));
  CHECK(params.values().cwiseAbs().maxCoeff() <= 0.011);
  CHECK(adam.steps_taken() == 1);
}
