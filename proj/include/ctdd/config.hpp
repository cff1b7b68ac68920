#ifndef CTDD_CONFIG_HPP
#define CTDD_CONFIG_HPP

#include <memory>
#include <optional>
#include <string>

#include "ctdd/forward_process.hpp"
#include "ctdd/mlp_denoiser.hpp"
#include "ctdd/objective.hpp"
#include "ctdd/rate_matrix.hpp"
#include "ctdd/sampler.hpp"

namespace ctdd {

// A complete run description.  Parsing is strict: unknown keys anywhere in
// the file are rejected, and every field is validated before any compute.
struct RunConfig {
  // state space
  int S = 2;
  int D = 1;
  bool ordinal = true;
  std::optional<uint64_t> permutation_seed;

  // rate block
  RateKind kind = RateKind::Uniform;
  double sigma0 = 8.0;
  double sigma_r = 1.0;
  double bd_lambda = 1.0;
  int absorbing_state = 0;
  BetaSchedule schedule = BetaSchedule::constant(1.0);

  // denoiser block
  std::string denoiser_variant = "mlp";  // mlp | tabular | oracle
  MlpConfig mlp;
  int tabular_time_bins = 64;

  // training block
  TrainOptions training;
  long checkpoint_every = 0;  // 0: only final

  // sampling block
  TauLeapConfig sampling;
  int num_samples = 1000;
  uint64_t sample_seed = 0;
  std::string sample_method = "tau_leap";  // tau_leap | next_reaction
  double euler_step = 0.001;

  // dataset block
  std::string dataset_path;
  std::string dataset_format = "image_histogram";  // image_histogram | csv_points | sequences
  int conditioning_prefix = 0;

  std::string output_dir = ".";

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  std::string to_json_text() const;
  // FNV-1a over the canonical dump; embedded in every artifact file.
  uint64_t hash() const;
  std::string hash_hex() const;

  StateSpace state_space() const;
  BaseRateMatrix rate_matrix() const;
  ForwardProcess forward_process() const;
  std::unique_ptr<TrainableDenoiser> make_trainable_denoiser() const;
  ConditioningMask mask() const { return ConditioningMask{conditioning_prefix}; }
};

uint64_t fnv1a(const std::string& text);

}  // namespace ctdd

#endif
