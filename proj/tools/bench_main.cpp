// Compares the serial reference implementations against the OpenMP-parallel
// paths and verifies they produce identical output.

#include <chrono>
#include <cstdio>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "ctdd/mlp_denoiser.hpp"
#include "ctdd/objective.hpp"
#include "ctdd/parameters.hpp"
#include "ctdd/sampler.hpp"

using namespace ctdd;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

EnumerableDistribution blob_2d(int S) {
  Eigen::VectorXd w(joint_count(S, 2));
  for (int a = 0; a < S; ++a)
    for (int b = 0; b < S; ++b) {
      const double da = a - 0.3 * S, db = b - 0.7 * S;
      w(joint_index({a, b}, S)) = std::exp(-(da * da + db * db) / (0.1 * S * S)) + 1e-3;
    }
  return EnumerableDistribution::dense(S, 2, w);
}

}  // namespace

int main() {
#if defined(_OPENMP)
  std::printf("openmp enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("openmp not available; parallel paths run serially\n");
#endif
  std::printf("%-34s %12s %12s %9s %7s\n", "kernel", "serial ms", "parallel ms", "speedup",
              "equal");

  {
    const int S = 8, chains = 4000;
    StateSpace space{S, 2, true, std::nullopt};
    ForwardProcess fp(space, BaseRateMatrix::gaussian_ordinal(S, 2.0, 1.0),
                      BetaSchedule::exponential(3.0, 5.0));
    const auto data = blob_2d(S);
    const OracleDenoiser oracle(data, fp);
    TauLeapConfig cfg;
    cfg.tau = 0.01;
    cfg.epsilon = 0.01;

    auto t0 = Clock::now();
    const auto serial =
        tau_leap_reverse(oracle, fp, cfg, chains, 42, ExecutionPolicy::Serial);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    const auto parallel =
        tau_leap_reverse(oracle, fp, cfg, chains, 42, ExecutionPolicy::Parallel);
    const double parallel_ms = ms_since(t0);
    const bool equal = serial.samples == parallel.samples;
    std::printf("%-34s %12.1f %12.1f %8.2fx %7s\n", "tau-leap reverse (oracle, S=8)", serial_ms,
                parallel_ms, serial_ms / parallel_ms, equal ? "yes" : "NO");
  }

  {
    const int S = 32, batch = 512;
    StateSpace space{S, 2, true, std::nullopt};
    ForwardProcess fp(space, BaseRateMatrix::gaussian_ordinal(S, 8.0, 1.0),
                      BetaSchedule::exponential(5.0, 5.0));
    const auto data = blob_2d(S);
    MlpConfig mcfg;
    mcfg.init_seed = 3;
    MlpDenoiser mlp(space, mcfg);
    ObjectiveOptions opts;
    opts.lambda_aux = 0.001;

    Eigen::VectorXd g_serial, g_parallel;
    auto t0 = Clock::now();
    loss_mc_grad(data, mlp, fp, opts, batch, 7, 0, g_serial, /*parallel=*/false);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    loss_mc_grad(data, mlp, fp, opts, batch, 7, 0, g_parallel, /*parallel=*/true);
    const double parallel_ms = ms_since(t0);
    const bool equal = (g_serial - g_parallel).cwiseAbs().maxCoeff() == 0.0;
    std::printf("%-34s %12.1f %12.1f %8.2fx %7s\n", "batch loss+gradient (MLP, S=32)", serial_ms,
                parallel_ms, serial_ms / parallel_ms, equal ? "yes" : "NO");
  }

  {
    const int S = 4, chains = 3000;
    StateSpace space{S, 1, true, std::nullopt};
    ForwardProcess fp(space, BaseRateMatrix::uniform(S), BetaSchedule::constant(1.5));
    Eigen::VectorXd probs(4);
    probs << 0.55, 0.25, 0.12, 0.08;
    const auto data = EnumerableDistribution::dense(S, 1, probs);
    CachedExactRates rates(data, fp);
    rates.prepare(fp.horizon(), 0.01, 0.001);

    auto t0 = Clock::now();
    const auto serial = next_reaction_reverse(rates, fp, 0.01, 0.001, chains, 21, 1e12,
                                              ExecutionPolicy::Serial);
    const double serial_ms = ms_since(t0);
    t0 = Clock::now();
    const auto parallel = next_reaction_reverse(rates, fp, 0.01, 0.001, chains, 21, 1e12,
                                                ExecutionPolicy::Parallel);
    const double parallel_ms = ms_since(t0);
    const bool equal = serial.samples == parallel.samples;
    std::printf("%-34s %12.1f %12.1f %8.2fx %7s\n", "next-reaction reverse (exact)", serial_ms,
                parallel_ms, serial_ms / parallel_ms, equal ? "yes" : "NO");
  }
  return 0;
}
