#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctdd/checkpoint.hpp"
#include "ctdd/config.hpp"
#include "ctdd/dataset.hpp"
#include "ctdd/metrics.hpp"
#include "ctdd/objective.hpp"
#include "ctdd/quadrature.hpp"
#include "ctdd/reverse_rates.hpp"
#include "ctdd/sampler.hpp"
#include "ctdd/tabular_denoiser.hpp"

namespace fs = std::filesystem;
using namespace ctdd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ",";
      out << std::setprecision(17) << m(i, j);
    }
    out << "\n";
  }
}

struct SampleFile {
  std::string config_hash;
  uint64_t seed = 0;
  std::vector<State> samples;
};

void write_samples(const std::string& path, const RunConfig& cfg, uint64_t seed,
                   const std::string& method_line, const std::vector<State>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# ctdd-samples v1\n";
  out << "# config_hash=" << cfg.hash_hex() << "\n";
  out << "# seed=" << seed << "\n";
  out << "# " << method_line << "\n";
  for (const State& x : samples) {
    for (size_t d = 0; d < x.size(); ++d) {
      if (d) out << ",";
      out << x[d];
    }
    out << "\n";
  }
}

SampleFile read_samples(const std::string& path, int D) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  SampleFile sf;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (line.find("config_hash") != std::string::npos && eq != std::string::npos)
        sf.config_hash = line.substr(eq + 1);
      else if (line.find("# seed") == 0 && eq != std::string::npos)
        sf.seed = std::stoull(line.substr(eq + 1));
      continue;
    }
    State x;
    std::istringstream fields(line);
    std::string tok;
    while (std::getline(fields, tok, ',')) x.push_back(std::stoi(tok));
    if (static_cast<int>(x.size()) != D)
      throw std::runtime_error("sample file row has wrong dimension count");
    sf.samples.push_back(std::move(x));
  }
  return sf;
}

void write_stats(const std::string& path, const RunConfig& cfg, uint64_t seed,
                 const SampleStats& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# ctdd-sample-stats v1\n";
  out << "# config_hash=" << cfg.hash_hex() << "\n";
  out << "# seed=" << seed << "\n";
  out << "step,t,jump_frac,reject_frac,clamp_frac,denoiser_calls\n";
  for (size_t i = 0; i < stats.steps.size(); ++i) {
    const auto& row = stats.steps[i];
    out << i << "," << row.t << "," << row.jump_frac << "," << row.reject_frac << ","
        << row.clamp_frac << "," << row.denoiser_calls << "\n";
  }
}

std::unique_ptr<Denoiser> sampling_denoiser(const RunConfig& cfg, const std::string& checkpoint,
                                            const Dataset* ds, const ForwardProcess& fp,
                                            std::unique_ptr<TrainableDenoiser>& keep_alive) {
  if (cfg.denoiser_variant == "oracle") {
    if (!ds) throw std::invalid_argument("oracle denoiser needs a dataset");
    return std::make_unique<OracleDenoiser>(ds->distribution, fp);
  }
  if (checkpoint.empty())
    throw std::invalid_argument("sampling a trained denoiser needs --checkpoint");
  keep_alive = cfg.make_trainable_denoiser();
  const CheckpointInfo info = load_checkpoint(checkpoint, *keep_alive);
  if (info.config_hash != cfg.hash())
    std::cerr << "warning: checkpoint was written under a different config\n";
  // Sampling uses the EMA shadow.
  keep_alive->params().values() = keep_alive->params().ema();
  struct Borrow : Denoiser {
    const TrainableDenoiser* inner;
    DenoiserOutput evaluate(const State& x, double t) const override {
      return inner->evaluate(x, t);
    }
  };
  auto view = std::make_unique<Borrow>();
  view->inner = keep_alive.get();
  return view;
}

int cmd_train(const std::string& config_path, const std::string& resume, long steps_override) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (steps_override >= 0) cfg.training.steps = steps_override;
  const Dataset ds = Dataset::load(cfg);
  const ForwardProcess fp = cfg.forward_process();

  auto den = cfg.make_trainable_denoiser();
  AdamOptimizer::Options aopts;
  aopts.lr = cfg.training.lr;
  aopts.warmup_steps = cfg.training.warmup_steps;
  aopts.clip_norm = cfg.training.clip_norm;
  AdamOptimizer opt(den->params().size(), aopts);

  if (!resume.empty()) {
    const CheckpointInfo info = load_checkpoint(resume, *den, &opt);
    std::cout << "resumed from " << resume << " at step " << info.step << "\n";
  }

  fs::create_directories(cfg.output_dir);
  const std::string log_path = cfg.output_dir + "/train_log.csv";
  std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  if (resume.empty()) log << "step,total,term1,term2,aux,grad_norm\n";

  TrainHooks hooks;
  hooks.on_log = [&](long step, const LossReport& report, double grad_norm) {
    log << step << "," << report.total << "," << report.ct_term1 << "," << report.ct_term2 << ","
        << report.aux_ll << "," << grad_norm << "\n";
    log.flush();
  };
  hooks.on_step_end = [&](long step) {
    const bool periodic = cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0;
    if (periodic) {
      save_checkpoint(cfg.output_dir + "/checkpoint_" + std::to_string(step) + ".ckpt", cfg, *den,
                      opt);
    }
  };

  train_loop(ds.distribution, *den, fp, cfg.training, opt, hooks);
  save_checkpoint(cfg.output_dir + "/checkpoint_final.ckpt", cfg, *den, opt);
  std::cout << "trained " << opt.steps_taken() << " steps; checkpoint at " << cfg.output_dir
            << "/checkpoint_final.ckpt\n";
  return kExitOk;
}

int cmd_sample(const std::string& config_path, const std::string& checkpoint,
               const std::string& out_prefix, double tau_override, long seed_override,
               int correctors_override, const std::string& method_override, long num_override,
               const std::string& denoiser_override) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (tau_override > 0.0) cfg.sampling.tau = tau_override;
  if (seed_override >= 0) cfg.sample_seed = static_cast<uint64_t>(seed_override);
  if (correctors_override >= 0) cfg.sampling.corrector_count = correctors_override;
  if (!method_override.empty()) cfg.sample_method = method_override;
  if (num_override > 0) cfg.num_samples = static_cast<int>(num_override);
  if (!denoiser_override.empty()) cfg.denoiser_variant = denoiser_override;

  const ForwardProcess fp = cfg.forward_process();
  std::optional<Dataset> ds;
  if (!cfg.dataset_path.empty()) ds = Dataset::load(cfg);
  if (cfg.denoiser_variant == "oracle" && !ds)
    throw std::invalid_argument("oracle sampling needs a dataset");

  std::unique_ptr<TrainableDenoiser> keep_alive;
  auto den = sampling_denoiser(cfg, checkpoint, ds ? &*ds : nullptr, fp, keep_alive);

  const ConditioningMask mask = cfg.mask();
  std::vector<State> conditioning;
  const std::vector<State>* cond_ptr = nullptr;
  if (mask.prefix > 0) {
    if (!ds || ds->distribution.support.empty())
      throw std::invalid_argument("conditional sampling needs a sequence dataset");
    conditioning = ds->distribution.support;
    cond_ptr = &conditioning;
  }

  std::vector<State> internal;
  std::string method_line;
  SampleStats stats;
  if (cfg.sample_method == "tau_leap") {
    TauLeapResult result = tau_leap_reverse(*den, fp, cfg.sampling, cfg.num_samples,
                                            cfg.sample_seed, ExecutionPolicy::Parallel, mask,
                                            cond_ptr);
    internal = std::move(result.samples);
    stats = std::move(result.stats);
    std::ostringstream os;
    os << "method=tau_leap tau=" << cfg.sampling.tau
       << " correctors=" << cfg.sampling.corrector_count
       << " nfe_per_chain=" << stats.denoiser_calls_per_chain;
    method_line = os.str();
  } else {
    CachedModelRates rates(*den, fp);
    rates.prepare(fp.horizon(), cfg.sampling.epsilon, cfg.euler_step);
    NextReactionResult result =
        next_reaction_reverse(rates, fp, cfg.sampling.epsilon, cfg.euler_step, cfg.num_samples,
                              cfg.sample_seed, 1e12, ExecutionPolicy::Parallel, mask, cond_ptr);
    internal.reserve(result.samples.size());
    for (const State& x : result.samples)
      internal.push_back(final_denoise(x, *den, cfg.sampling.epsilon, mask));
    std::ostringstream os;
    os << "method=next_reaction euler_step=" << cfg.euler_step
       << " rate_evals_per_chain=" << result.rate_evals_per_chain;
    method_line = os.str();
  }

  const std::vector<State> samples = unpermute_samples(internal, cfg.state_space());
  fs::create_directories(fs::path(out_prefix).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out_prefix).parent_path());
  write_samples(out_prefix + ".csv", cfg, cfg.sample_seed, method_line, samples);
  if (!stats.steps.empty()) write_stats(out_prefix + "_stats.csv", cfg, cfg.sample_seed, stats);
  std::cout << "wrote " << samples.size() << " samples to " << out_prefix << ".csv ("
            << method_line << ")\n";
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& samples_path,
             const std::string& out_path, double assert_hellinger_max) {
  RunConfig cfg = RunConfig::from_file(config_path);
  const Dataset ds = Dataset::load(cfg);
  const SampleFile sf = read_samples(samples_path, cfg.D);
  if (sf.samples.empty()) throw std::runtime_error("sample file is empty");
  if (!sf.config_hash.empty() && sf.config_hash != cfg.hash_hex())
    throw std::invalid_argument("eval refused: sample file was produced under config hash " +
                                sf.config_hash + ", current is " + cfg.hash_hex());

  nlohmann::json report;
  report["config_hash"] = cfg.hash_hex();
  report["seed"] = sf.seed;
  report["n_samples"] = sf.samples.size();
  auto& metrics = report["metrics"];
  double primary_hellinger = 0.0;

  if (cfg.dataset_format == "sequences") {
    Histogram gen = Histogram::pooled_tokens(sf.samples, cfg.S, cfg.conditioning_prefix);
    Histogram ref = Histogram::pooled_tokens(ds.raw_sequences, cfg.S, cfg.conditioning_prefix);
    primary_hellinger = hellinger(gen, ref);
    metrics.push_back({{"name", "hellinger_tokens"}, {"value", primary_hellinger}});

    double mean_out = 0.0, m2 = 0.0;
    long n = 0;
    for (const State& ref_seq : ds.raw_sequences) {
      const double v = outlier_proportion(sf.samples, ref_seq, cfg.conditioning_prefix);
      ++n;
      const double delta = v - mean_out;
      mean_out += delta / n;
      m2 += delta * (v - mean_out);
    }
    const double stddev = n > 1 ? std::sqrt(m2 / (n - 1)) : 0.0;
    metrics.push_back(
        {{"name", "outlier_proportion"}, {"value", mean_out}, {"std", stddev}, {"n", n}});
  } else {
    // joint-state histogram vs the dataset grid
    Histogram gen = Histogram::joint_states(sf.samples, cfg.S, cfg.D);
    Eigen::VectorXd ref_weights = Eigen::VectorXd::Zero(joint_count(cfg.S, cfg.D));
    for (size_t i = 0; i < ds.distribution.support.size(); ++i)
      ref_weights(joint_index(ds.distribution.support[i], cfg.S)) +=
          ds.distribution.probs(static_cast<long>(i));
    primary_hellinger = hellinger(gen, Histogram::from_weights(ref_weights));
    metrics.push_back({{"name", "hellinger_joint"}, {"value", primary_hellinger}});
    metrics.push_back({{"name", "tv_joint"}, {"value", tv_exact(gen, ref_weights)}});
  }

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";

  if (assert_hellinger_max >= 0.0 && primary_hellinger > assert_hellinger_max) {
    std::cerr << "hellinger " << primary_hellinger << " exceeds threshold " << assert_hellinger_max
              << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_validate(const std::string& config_path, const std::string& dump_rate,
                 const std::string& dump_spectrum, const std::string& dump_qt0, double qt0_time) {
  RunConfig cfg = RunConfig::from_file(config_path);
  int failures = 0;
  auto check = [&failures](const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "ok   " : "FAIL ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };

  const BaseRateMatrix rb = cfg.rate_matrix();
  const Eigen::MatrixXd& R = rb.entries();
  const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
  {
    double worst = 0.0;
    for (int i = 0; i < R.rows(); ++i) worst = std::max(worst, std::abs(R.row(i).sum()));
    check("rate-matrix row sums", worst <= 1e-12 * scale, "max |sum| = " + std::to_string(worst));
  }
  {
    bool ok = true;
    for (int i = 0; i < R.rows() && ok; ++i)
      for (int j = 0; j < R.cols() && ok; ++j)
        if (i == j ? R(i, j) > 0 : R(i, j) < 0) ok = false;
    check("rate-matrix sign pattern", ok);
  }
  {
    const auto dec = rb.decompose();
    const double err =
        (dec.Q * dec.eigenvalues.asDiagonal() * dec.Qinv - R).cwiseAbs().maxCoeff();
    check("spectral reconstruction", err <= 1e-9 * scale, "max err = " + std::to_string(err));
    if (!dump_spectrum.empty()) {
      write_matrix_csv(dump_spectrum, dec.eigenvalues.transpose());
      std::cout << "wrote spectrum to " << dump_spectrum << "\n";
    }
  }
  {
    const double res = (rb.stationary().transpose() * R).cwiseAbs().maxCoeff();
    check("stationary distribution", res <= 1e-10 * scale, "residual = " + std::to_string(res));
  }
  if (rb.reversible()) {
    double worst = 0.0;
    const Eigen::VectorXd& p = rb.stationary();
    for (int i = 0; i < R.rows(); ++i)
      for (int j = 0; j < R.cols(); ++j)
        if (i != j) worst = std::max(worst, std::abs(p(i) * R(i, j) - p(j) * R(j, i)));
    check("detailed balance", worst <= 1e-10, "residual = " + std::to_string(worst));
  }
  {
    const ForwardProcess fp = cfg.forward_process();
    bool ok = true;
    for (double t : {0.1, 0.5, 1.0}) {
      const Eigen::MatrixXd P = fp.qt0(t);
      for (int i = 0; i < P.rows(); ++i)
        if (std::abs(P.row(i).sum() - 1.0) > 1e-9 || P.row(i).minCoeff() < 0.0) ok = false;
    }
    check("q_{t|0} rows are distributions", ok);
    if (!dump_qt0.empty()) {
      write_matrix_csv(dump_qt0, fp.qt0(qt0_time));
      std::cout << "wrote q_{t|0}(" << qt0_time << ") to " << dump_qt0 << "\n";
    }
  }
  if (!dump_rate.empty()) {
    write_matrix_csv(dump_rate, R);
    std::cout << "wrote rate matrix to " << dump_rate << "\n";
  }

  // built-in tiny-chain identities, independent of the configured sizes
  {
    StateSpace space{4, 1, true, std::nullopt};
    ForwardProcess fp(space, BaseRateMatrix::uniform(4), BetaSchedule::constant(1.0));
    Eigen::VectorXd probs(4);
    probs << 0.45, 0.3, 0.15, 0.1;
    const auto data = EnumerableDistribution::dense(4, 1, probs);
    const OracleDenoiser oracle(data, fp);
    double worst = 0.0;
    for (double t : {0.1, 0.5, 0.9}) {
      for (int s = 0; s < 4; ++s) {
        const State x{s};
        const auto via_model = model_reverse_rates(x, t, oracle.evaluate(x, t), fp);
        const auto exact = exact_reverse_rates(x, t, data, fp);
        worst = std::max(worst, (via_model.rates - exact.rates).cwiseAbs().maxCoeff());
      }
    }
    check("reverse-rate identity (tiny chain)", worst <= 1e-10,
          "max diff = " + std::to_string(worst));

    double res_worst = 0.0;
    for (double t : {0.1, 0.5, 0.9}) {
      const Eigen::VectorXd qt = data.marginal_at(fp, t);
      Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(4, 4);
      const double beta = fp.schedule().beta(t);
      for (int i = 0; i < 4; ++i) {
        const auto exact = exact_reverse_rates(State{i}, t, data, fp);
        for (int j = 0; j < 4; ++j)
          if (j != i) gen(i, j) = beta * fp.rate()(i, j) + exact.rates(0, j);
        gen(i, i) = -gen.row(i).sum();
      }
      res_worst = std::max(res_worst, (qt.transpose() * gen).cwiseAbs().maxCoeff());
    }
    check("corrector stationarity (tiny chain)", res_worst <= 1e-9,
          "residual = " + std::to_string(res_worst));

    TabularDenoiser tab(space, 8, 0.01, 1.0, 0.5);
    Rng rng = make_stream(7, 7);
    std::normal_distribution<double> noise(0.0, 0.4);
    for (long i = 0; i < tab.params().size(); ++i) tab.params().values()(i) = noise(rng);
    ObjectiveOptions oopts;
    oopts.variant = CtVariant::OnePass;
    oopts.lambda_aux = 0.5;
    ExhaustiveSpec spec;
    spec.quad_order = 8;
    spec.t_lo = 0.05;
    spec.t_hi = 1.0;
    Eigen::VectorXd grad;
    loss_exhaustive_grad(data, tab, fp, oopts, spec, grad);
    double max_rel = 0.0;
    const double h = 1e-6;
    for (long i = 0; i < tab.params().size(); i += 37) {
      const double save = tab.params().values()(i);
      tab.params().values()(i) = save + h;
      const double up = loss_exhaustive_value(data, tab, fp, oopts, spec).total;
      tab.params().values()(i) = save - h;
      const double down = loss_exhaustive_value(data, tab, fp, oopts, spec).total;
      tab.params().values()(i) = save;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(fd - grad(i)) / std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
    check("gradient check (tabular, exhaustive loss)", max_rel <= 1e-6,
          "max rel err = " + std::to_string(max_rel));
  }

  return failures == 0 ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-time discrete denoising diffusion"};
  app.require_subcommand(1);

  std::string config_path;
  std::string resume;
  long steps_override = -1;
  auto* train = app.add_subcommand("train", "train a denoiser");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--steps", steps_override, "override training.steps");

  std::string checkpoint, out_prefix, method_override, denoiser_override;
  double tau_override = -1.0;
  long seed_override = -1, num_override = -1;
  int correctors_override = -1;
  auto* sample = app.add_subcommand("sample", "draw samples from the reverse process");
  sample->add_option("--config", config_path, "run config JSON")->required();
  sample->add_option("--checkpoint", checkpoint, "trained checkpoint");
  sample->add_option("--out", out_prefix, "output prefix")->required();
  sample->add_option("--tau", tau_override, "override sampling.tau");
  sample->add_option("--seed", seed_override, "override sampling seed");
  sample->add_option("--correctors", correctors_override, "override corrector steps");
  sample->add_option("--method", method_override, "tau_leap | next_reaction");
  sample->add_option("--num", num_override, "override sample count");
  sample->add_option("--denoiser", denoiser_override, "override denoiser variant (e.g. oracle)");

  std::string samples_path, metrics_out = "metrics.json";
  double assert_hellinger_max = -1.0;
  auto* eval = app.add_subcommand("eval", "evaluate samples against the dataset");
  eval->add_option("--config", config_path, "run config JSON")->required();
  eval->add_option("--samples", samples_path, "samples CSV")->required();
  eval->add_option("--out", metrics_out, "metrics JSON output");
  eval->add_option("--assert-hellinger-max", assert_hellinger_max,
                   "fail (exit 1) if the Hellinger distance exceeds this");

  std::string dump_rate, dump_spectrum, dump_qt0;
  double qt0_time = 0.5;
  auto* validate = app.add_subcommand("validate", "run the built-in invariant checks");
  validate->add_option("--config", config_path, "run config JSON")->required();
  validate->add_option("--dump-rate", dump_rate, "write R_b as CSV");
  validate->add_option("--dump-spectrum", dump_spectrum, "write eigenvalues as CSV");
  validate->add_option("--dump-qt0", dump_qt0, "write q_{t|0} as CSV");
  validate->add_option("--qt0-time", qt0_time, "time for --dump-qt0");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, resume, steps_override);
    if (sample->parsed())
      return cmd_sample(config_path, checkpoint, out_prefix, tau_override, seed_override,
                        correctors_override, method_override, num_override, denoiser_override);
    if (eval->parsed())
      return cmd_eval(config_path, samples_path, metrics_out, assert_hellinger_max);
    if (validate->parsed())
      return cmd_validate(config_path, dump_rate, dump_spectrum, dump_qt0, qt0_time);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
