#include "ctdd/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "ctdd/tabular_denoiser.hpp"

namespace ctdd {

using nlohmann::json;

namespace {

// Consumes keys as they are read; leftovers are unknown keys.
class StrictObject {
 public:
  StrictObject(json obj, std::string where) : obj_(std::move(obj)), where_(std::move(where)) {
    if (!obj_.is_object()) throw std::invalid_argument("config: " + where_ + " must be an object");
  }

  template <typename T>
  T take(const std::string& key, const T& fallback) {
    if (!obj_.contains(key)) return fallback;
    T out = obj_.at(key).get<T>();
    obj_.erase(key);
    return out;
  }

  template <typename T>
  T require(const std::string& key) {
    if (!obj_.contains(key))
      throw std::invalid_argument("config: missing required key " + where_ + "." + key);
    T out = obj_.at(key).get<T>();
    obj_.erase(key);
    return out;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  json take_object(const std::string& key) {
    if (!obj_.contains(key)) return json::object();
    json out = obj_.at(key);
    obj_.erase(key);
    return out;
  }

  void finish() const {
    if (!obj_.empty()) {
      std::ostringstream os;
      os << "config: unknown key(s) in " << where_ << ":";
      for (auto it = obj_.begin(); it != obj_.end(); ++it) os << " " << it.key();
      throw std::invalid_argument(os.str());
    }
  }

 private:
  json obj_;
  std::string where_;
};

}  // namespace

uint64_t fnv1a(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root = json::parse(text);
  StrictObject top(root, "config");
  RunConfig cfg;

  {
    StrictObject ss(top.take_object("state_space"), "state_space");
    cfg.S = ss.require<int>("S");
    cfg.D = ss.require<int>("D");
    cfg.ordinal = ss.take<bool>("ordinal", true);
    if (ss.has("permutation_seed"))
      cfg.permutation_seed = ss.take<uint64_t>("permutation_seed", 0);
    ss.finish();
  }
  {
    StrictObject rb(top.take_object("rate"), "rate");
    cfg.kind = rate_kind_from_name(rb.require<std::string>("kind"));
    cfg.sigma0 = rb.take<double>("sigma0", cfg.sigma0);
    cfg.sigma_r = rb.take<double>("sigma_r", cfg.sigma_r);
    cfg.bd_lambda = rb.take<double>("lambda", cfg.bd_lambda);
    cfg.absorbing_state = rb.take<int>("absorbing_state", cfg.S - 1);
    StrictObject sc(rb.take_object("schedule"), "rate.schedule");
    const std::string sk = sc.take<std::string>("kind", "constant");
    if (sk == "constant") {
      cfg.schedule = BetaSchedule::constant(sc.take<double>("c", 1.0));
    } else if (sk == "exponential") {
      cfg.schedule = BetaSchedule::exponential(sc.require<double>("a"), sc.require<double>("b"));
    } else {
      throw std::invalid_argument("config: unknown schedule kind " + sk);
    }
    sc.finish();
    rb.finish();
  }
  {
    StrictObject dn(top.take_object("denoiser"), "denoiser");
    cfg.denoiser_variant = dn.take<std::string>("variant", "mlp");
    if (cfg.denoiser_variant != "mlp" && cfg.denoiser_variant != "tabular" &&
        cfg.denoiser_variant != "oracle")
      throw std::invalid_argument("config: unknown denoiser variant " + cfg.denoiser_variant);
    cfg.mlp.hidden_width = dn.take<int>("hidden_width", cfg.mlp.hidden_width);
    cfg.mlp.blocks = dn.take<int>("blocks", cfg.mlp.blocks);
    cfg.mlp.block_hidden = dn.take<int>("block_hidden", cfg.mlp.block_hidden);
    cfg.mlp.time_embed_dim = dn.take<int>("time_embed_dim", cfg.mlp.time_embed_dim);
    cfg.mlp.time_hidden = dn.take<int>("time_hidden", cfg.mlp.time_hidden);
    cfg.mlp.time_out = dn.take<int>("time_out", cfg.mlp.time_out);
    cfg.tabular_time_bins = dn.take<int>("time_bins", cfg.tabular_time_bins);
    dn.finish();
  }
  {
    StrictObject tr(top.take_object("training"), "training");
    cfg.training.steps = tr.take<long>("steps", 1000);
    cfg.training.batch_size = tr.take<int>("batch_size", 32);
    cfg.training.lr = tr.take<double>("lr", 1e-4);
    cfg.training.lambda_aux = tr.take<double>("lambda", 0.0);
    cfg.training.warmup_steps = tr.take<long>("warmup_steps", 5000);
    cfg.training.clip_norm = tr.take<double>("clip_norm", 1.0);
    cfg.training.ema_decay = tr.take<double>("ema_decay", 0.9999);
    cfg.training.seed = tr.take<uint64_t>("seed", 0);
    cfg.training.epsilon = tr.take<double>("epsilon", 0.01);
    const std::string variant = tr.take<std::string>("variant", "one_pass");
    if (variant == "one_pass")
      cfg.training.variant = CtVariant::OnePass;
    else if (variant == "two_pass")
      cfg.training.variant = CtVariant::TwoPass;
    else
      throw std::invalid_argument("config: unknown objective variant " + variant);
    cfg.training.log_every = tr.take<int>("log_every", 100);
    cfg.checkpoint_every = tr.take<long>("checkpoint_every", 0);
    cfg.training.parallel = tr.take<bool>("parallel", true);
    tr.finish();
  }
  {
    StrictObject sp(top.take_object("sampling"), "sampling");
    cfg.sampling.tau = sp.take<double>("tau", 0.01);
    cfg.sampling.epsilon = sp.take<double>("epsilon", cfg.training.epsilon);
    cfg.sampling.corrector_count = sp.take<int>("corrector_steps", 0);
    cfg.sampling.corrector_entry = sp.take<double>("corrector_entry", 0.1);
    cfg.sampling.corrector_active_below = sp.take<bool>("corrector_active_below", true);
    cfg.sampling.corrector_step_scale = sp.take<double>("corrector_step_scale", 1.5);
    cfg.sampling.reject_multi_jump = sp.take<bool>("reject_multi_jump", !cfg.ordinal);
    cfg.num_samples = sp.take<int>("num_samples", 1000);
    cfg.sample_seed = sp.take<uint64_t>("seed", 0);
    cfg.sample_method = sp.take<std::string>("method", "tau_leap");
    if (cfg.sample_method != "tau_leap" && cfg.sample_method != "next_reaction")
      throw std::invalid_argument("config: unknown sampling method " + cfg.sample_method);
    cfg.euler_step = sp.take<double>("euler_step", 0.001);
    sp.finish();
  }
  {
    StrictObject ds(top.take_object("dataset"), "dataset");
    cfg.dataset_path = ds.take<std::string>("path", "");
    cfg.dataset_format = ds.take<std::string>("format", "image_histogram");
    if (cfg.dataset_format != "image_histogram" && cfg.dataset_format != "csv_points" &&
        cfg.dataset_format != "sequences")
      throw std::invalid_argument("config: unknown dataset format " + cfg.dataset_format);
    cfg.conditioning_prefix = ds.take<int>("conditioning_prefix", 0);
    ds.finish();
  }
  cfg.output_dir = top.take<std::string>("output_dir", ".");
  top.finish();

  // cross-field validation
  cfg.state_space().validate();
  if (cfg.conditioning_prefix < 0 || cfg.conditioning_prefix >= cfg.D)
    throw std::invalid_argument("config: conditioning prefix must lie in [0, D)");
  if (!(cfg.training.epsilon > 0.0) || cfg.training.epsilon >= 1.0)
    throw std::invalid_argument("config: training epsilon must lie in (0, T)");
  cfg.sampling.validate(1.0);
  if (cfg.training.batch_size < 1 || cfg.training.steps < 0)
    throw std::invalid_argument("config: bad training sizes");
  if (!(cfg.training.lr > 0.0)) throw std::invalid_argument("config: learning rate must be > 0");
  if (cfg.num_samples < 1) throw std::invalid_argument("config: num_samples must be >= 1");
  if (!(cfg.euler_step > 0.0)) throw std::invalid_argument("config: euler_step must be > 0");
  cfg.rate_matrix();  // constructor validation
  cfg.training.mask = cfg.mask();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string RunConfig::to_json_text() const {
  json root;
  root["state_space"]["S"] = S;
  root["state_space"]["D"] = D;
  root["state_space"]["ordinal"] = ordinal;
  if (permutation_seed) root["state_space"]["permutation_seed"] = *permutation_seed;
  root["rate"]["kind"] = rate_kind_name(kind);
  if (kind == RateKind::GaussianOrdinal) {
    root["rate"]["sigma0"] = sigma0;
    root["rate"]["sigma_r"] = sigma_r;
  }
  if (kind == RateKind::BirthDeath) root["rate"]["lambda"] = bd_lambda;
  if (kind == RateKind::Absorbing) root["rate"]["absorbing_state"] = absorbing_state;
  if (schedule.kind() == BetaSchedule::Kind::Constant) {
    root["rate"]["schedule"]["kind"] = "constant";
    root["rate"]["schedule"]["c"] = schedule.c();
  } else {
    root["rate"]["schedule"]["kind"] = "exponential";
    root["rate"]["schedule"]["a"] = schedule.a();
    root["rate"]["schedule"]["b"] = schedule.b();
  }
  root["denoiser"]["variant"] = denoiser_variant;
  if (denoiser_variant == "mlp") {
    root["denoiser"]["hidden_width"] = mlp.hidden_width;
    root["denoiser"]["blocks"] = mlp.blocks;
    root["denoiser"]["block_hidden"] = mlp.block_hidden;
    root["denoiser"]["time_embed_dim"] = mlp.time_embed_dim;
    root["denoiser"]["time_hidden"] = mlp.time_hidden;
    root["denoiser"]["time_out"] = mlp.time_out;
  }
  if (denoiser_variant == "tabular") root["denoiser"]["time_bins"] = tabular_time_bins;
  root["training"]["steps"] = training.steps;
  root["training"]["batch_size"] = training.batch_size;
  root["training"]["lr"] = training.lr;
  root["training"]["lambda"] = training.lambda_aux;
  root["training"]["warmup_steps"] = training.warmup_steps;
  root["training"]["clip_norm"] = training.clip_norm;
  root["training"]["ema_decay"] = training.ema_decay;
  root["training"]["seed"] = training.seed;
  root["training"]["epsilon"] = training.epsilon;
  root["training"]["variant"] =
      training.variant == CtVariant::OnePass ? "one_pass" : "two_pass";
  root["training"]["log_every"] = training.log_every;
  root["training"]["checkpoint_every"] = checkpoint_every;
  root["training"]["parallel"] = training.parallel;
  root["sampling"]["tau"] = sampling.tau;
  root["sampling"]["epsilon"] = sampling.epsilon;
  root["sampling"]["corrector_steps"] = sampling.corrector_count;
  root["sampling"]["corrector_entry"] = sampling.corrector_entry;
  root["sampling"]["corrector_active_below"] = sampling.corrector_active_below;
  root["sampling"]["corrector_step_scale"] = sampling.corrector_step_scale;
  root["sampling"]["reject_multi_jump"] = sampling.reject_multi_jump;
  root["sampling"]["num_samples"] = num_samples;
  root["sampling"]["seed"] = sample_seed;
  root["sampling"]["method"] = sample_method;
  root["sampling"]["euler_step"] = euler_step;
  root["dataset"]["path"] = dataset_path;
  root["dataset"]["format"] = dataset_format;
  root["dataset"]["conditioning_prefix"] = conditioning_prefix;
  root["output_dir"] = output_dir;
  return root.dump(2);
}

uint64_t RunConfig::hash() const { return fnv1a(to_json_text()); }

std::string RunConfig::hash_hex() const {
  std::ostringstream os;
  os << std::hex << hash();
  return os.str();
}

StateSpace RunConfig::state_space() const {
  StateSpace ss;
  ss.S = S;
  ss.D = D;
  ss.ordinal = ordinal;
  if (permutation_seed) ss.permutation = StateSpace::random_permutation(S, *permutation_seed);
  return ss;
}

BaseRateMatrix RunConfig::rate_matrix() const {
  switch (kind) {
    case RateKind::Uniform: return BaseRateMatrix::uniform(S);
    case RateKind::Absorbing: return BaseRateMatrix::absorbing(S, absorbing_state);
    case RateKind::BirthDeath: return BaseRateMatrix::birth_death(S, bd_lambda);
    case RateKind::GaussianOrdinal: return BaseRateMatrix::gaussian_ordinal(S, sigma0, sigma_r);
  }
  throw std::logic_error("unreachable");
}

ForwardProcess RunConfig::forward_process() const {
  return ForwardProcess(state_space(), rate_matrix(), schedule, 1.0);
}

std::unique_ptr<TrainableDenoiser> RunConfig::make_trainable_denoiser() const {
  if (denoiser_variant == "tabular") {
    return std::make_unique<TabularDenoiser>(state_space(), tabular_time_bins, training.epsilon,
                                             1.0, training.ema_decay);
  }
  if (denoiser_variant == "mlp") {
    MlpConfig mc = mlp;
    mc.ema_decay = training.ema_decay;
    mc.init_seed = training.seed;
    return std::make_unique<MlpDenoiser>(state_space(), mc);
  }
  throw std::invalid_argument("config: denoiser variant " + denoiser_variant +
                              " is not trainable");
}

}  // namespace ctdd
