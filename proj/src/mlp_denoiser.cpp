#include "ctdd/mlp_denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kTimePosScale = 1000.0;

using MatMap = Eigen::Map<const Eigen::MatrixXd>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;

MatMap mat(const Eigen::VectorXd& theta, long offset, long rows, long cols) {
  return MatMap(theta.data() + offset, rows, cols);
}
VecMap vec(const Eigen::VectorXd& theta, long offset, long n) {
  return VecMap(theta.data() + offset, n);
}

Eigen::Map<Eigen::MatrixXd> mat_mut(Eigen::VectorXd& g, long offset, long rows, long cols) {
  return Eigen::Map<Eigen::MatrixXd>(g.data() + offset, rows, cols);
}
Eigen::Map<Eigen::VectorXd> vec_mut(Eigen::VectorXd& g, long offset, long n) {
  return Eigen::Map<Eigen::VectorXd>(g.data() + offset, n);
}
}  // namespace

struct MlpDenoiser::Ws : TrainableDenoiser::Workspace {
  Eigen::VectorXd x_in;
  Eigen::VectorXd embed;     // sinusoidal embedding, no parameters
  Eigen::VectorXd te1_pre;   // time MLP hidden pre-activation
  Eigen::VectorXd te1;
  Eigen::VectorXd te;        // processed time embedding
  struct Block {
    Eigen::VectorXd h_in;
    Eigen::VectorXd m1_pre;
    Eigen::VectorXd m1;
    Eigen::VectorXd resid;   // h_in + mlp(h_in)
    double mean = 0.0;
    double inv_std = 1.0;
    Eigen::VectorXd n_hat;
    Eigen::VectorXd ln_out;  // gain * n_hat + bias
    Eigen::VectorXd film;    // [scale; offset]
  };
  std::vector<Block> blocks;
  Eigen::VectorXd h_final;
  Eigen::MatrixXd probs;
};

MlpDenoiser::MlpDenoiser(const StateSpace& space, MlpConfig cfg) : space_(space), cfg_(cfg) {
  space_.validate();
  const int D = space_.D;
  const int S = space_.S;
  const int W = cfg_.hidden_width;
  params_.add_segment("lift.W", {W, D});
  params_.add_segment("lift.b", {W});
  params_.add_segment("time.W1", {cfg_.time_hidden, cfg_.time_embed_dim});
  params_.add_segment("time.b1", {cfg_.time_hidden});
  params_.add_segment("time.W2", {cfg_.time_out, cfg_.time_hidden});
  params_.add_segment("time.b2", {cfg_.time_out});
  for (int b = 0; b < cfg_.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    params_.add_segment(p + "W1", {cfg_.block_hidden, W});
    params_.add_segment(p + "b1", {cfg_.block_hidden});
    params_.add_segment(p + "W2", {W, cfg_.block_hidden});
    params_.add_segment(p + "b2", {W});
    params_.add_segment(p + "ln_gain", {W});
    params_.add_segment(p + "ln_bias", {W});
    params_.add_segment(p + "film.W", {2 * W, cfg_.time_out});
    params_.add_segment(p + "film.b", {2 * W});
  }
  params_.add_segment("out.W", {static_cast<long>(D) * S, W});
  params_.add_segment("out.b", {static_cast<long>(D) * S});
  params_.finalize(cfg_.ema_decay);

  Rng rng = make_stream(cfg_.init_seed, /*stream=*/0x11117);
  auto fill = [&](const std::string& name, double scale) {
    auto v = params_.view(name);
    std::normal_distribution<double> dist(0.0, scale);
    for (long i = 0; i < v.size(); ++i) v(i) = dist(rng);
  };
  fill("lift.W", 1.0 / std::sqrt(static_cast<double>(D)));
  fill("time.W1", 1.0 / std::sqrt(static_cast<double>(cfg_.time_embed_dim)));
  fill("time.W2", 1.0 / std::sqrt(static_cast<double>(cfg_.time_hidden)));
  for (int b = 0; b < cfg_.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    fill(p + "W1", 1.0 / std::sqrt(static_cast<double>(W)));
    fill(p + "W2", 1.0 / std::sqrt(static_cast<double>(cfg_.block_hidden)));
    params_.view(p + "ln_gain").setOnes();
    // FiLM starts as the identity modulation.
    auto fb = params_.view(p + "film.b");
    fb.head(W).setOnes();
  }
  // out.W and out.b stay zero: a fresh model outputs uniform rows.
  params_.reset_ema_to_values();
}

Eigen::VectorXd MlpDenoiser::time_embedding(double t) const {
  const int E = cfg_.time_embed_dim;
  Eigen::VectorXd e(E);
  const double pos = t * kTimePosScale;
  for (int k = 0; k < E / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / static_cast<double>(E));
    e(2 * k) = std::sin(pos * freq);
    e(2 * k + 1) = std::cos(pos * freq);
  }
  if (E % 2 == 1) e(E - 1) = std::sin(pos * std::pow(10000.0, -1.0));
  return e;
}

DenoiserOutput MlpDenoiser::run(const State& x, double t, const Eigen::VectorXd& theta,
                                Ws* ws) const {
  const int D = space_.D;
  const int S = space_.S;
  const int W = cfg_.hidden_width;

  Eigen::VectorXd x_in(D);
  for (int d = 0; d < D; ++d) x_in(d) = 2.0 * x[d] / (S - 1.0) - 1.0;

  auto seg = [&](const std::string& name) { return params_.segment(name); };
  auto M = [&](const std::string& name, long rows, long cols) {
    return mat(theta, seg(name).offset, rows, cols);
  };
  auto V = [&](const std::string& name, long n) { return vec(theta, seg(name).offset, n); };

  Eigen::VectorXd h = M("lift.W", W, D) * x_in + V("lift.b", W);

  Eigen::VectorXd embed = time_embedding(t);
  Eigen::VectorXd te1_pre =
      M("time.W1", cfg_.time_hidden, cfg_.time_embed_dim) * embed + V("time.b1", cfg_.time_hidden);
  Eigen::VectorXd te1 = te1_pre.cwiseMax(0.0);
  Eigen::VectorXd te = M("time.W2", cfg_.time_out, cfg_.time_hidden) * te1 + V("time.b2", cfg_.time_out);

  if (ws) {
    ws->x_in = x_in;
    ws->embed = embed;
    ws->te1_pre = te1_pre;
    ws->te1 = te1;
    ws->te = te;
    ws->blocks.assign(cfg_.blocks, Ws::Block{});
  }

  for (int b = 0; b < cfg_.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    Eigen::VectorXd m1_pre = M(p + "W1", cfg_.block_hidden, W) * h + V(p + "b1", cfg_.block_hidden);
    Eigen::VectorXd m1 = m1_pre.cwiseMax(0.0);
    Eigen::VectorXd resid = h + M(p + "W2", W, cfg_.block_hidden) * m1 + V(p + "b2", W);

    const double mean = resid.mean();
    const double var = (resid.array() - mean).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    Eigen::VectorXd n_hat = (resid.array() - mean).matrix() * inv_std;
    Eigen::VectorXd ln_out =
        V(p + "ln_gain", W).cwiseProduct(n_hat) + V(p + "ln_bias", W);

    Eigen::VectorXd film = M(p + "film.W", 2 * W, cfg_.time_out) * te + V(p + "film.b", 2 * W);
    Eigen::VectorXd h_out = film.head(W).cwiseProduct(ln_out) + film.tail(W);

    if (ws) {
      auto& blk = ws->blocks[b];
      blk.h_in = h;
      blk.m1_pre = m1_pre;
      blk.m1 = m1;
      blk.resid = resid;
      blk.mean = mean;
      blk.inv_std = inv_std;
      blk.n_hat = n_hat;
      blk.ln_out = ln_out;
      blk.film = film;
    }
    h = h_out;
  }

  Eigen::VectorXd logits_flat = M("out.W", static_cast<long>(D) * S, W) * h +
                                V("out.b", static_cast<long>(D) * S);
  if (!logits_flat.allFinite()) throw std::runtime_error("numeric overflow in denoiser forward");
  Eigen::MatrixXd logits(D, S);
  for (int d = 0; d < D; ++d)
    for (int s = 0; s < S; ++s) logits(d, s) = logits_flat(d * S + s);

  DenoiserOutput out{softmax_rows(logits)};
  if (ws) {
    ws->h_final = h;
    ws->probs = out.probs;
  }
  return out;
}

DenoiserOutput MlpDenoiser::evaluate(const State& x, double t) const {
  return run(x, t, params_.values(), nullptr);
}

DenoiserOutput MlpDenoiser::evaluate_ema(const State& x, double t) const {
  return run(x, t, params_.ema(), nullptr);
}

std::unique_ptr<TrainableDenoiser::Workspace> MlpDenoiser::make_workspace() const {
  return std::make_unique<Ws>();
}

DenoiserOutput MlpDenoiser::forward(const State& x, double t, Workspace& ws) const {
  return run(x, t, params_.values(), &static_cast<Ws&>(ws));
}

void MlpDenoiser::backward(const Workspace& ws_base, const Eigen::MatrixXd& logit_adjoint,
                           Eigen::VectorXd& grad) const {
  const auto& ws = static_cast<const Ws&>(ws_base);
  const int D = space_.D;
  const int S = space_.S;
  const int W = cfg_.hidden_width;
  const Eigen::VectorXd& theta = params_.values();

  auto seg = [&](const std::string& name) { return params_.segment(name); };
  auto M = [&](const std::string& name, long rows, long cols) {
    return mat(theta, seg(name).offset, rows, cols);
  };
  auto Gm = [&](const std::string& name, long rows, long cols) {
    return mat_mut(grad, seg(name).offset, rows, cols);
  };
  auto Gv = [&](const std::string& name, long n) { return vec_mut(grad, seg(name).offset, n); };

  Eigen::VectorXd dlogits(static_cast<long>(D) * S);
  for (int d = 0; d < D; ++d)
    for (int s = 0; s < S; ++s) dlogits(d * S + s) = logit_adjoint(d, s);

  Gm("out.W", static_cast<long>(D) * S, W) += dlogits * ws.h_final.transpose();
  Gv("out.b", static_cast<long>(D) * S) += dlogits;
  Eigen::VectorXd dh = M("out.W", static_cast<long>(D) * S, W).transpose() * dlogits;

  Eigen::VectorXd dte = Eigen::VectorXd::Zero(cfg_.time_out);
  for (int b = cfg_.blocks - 1; b >= 0; --b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const auto& blk = ws.blocks[b];

    // h_out = scale .* ln_out + offset with [scale; offset] = film.W te + film.b
    Eigen::VectorXd dfilm(2 * W);
    dfilm.head(W) = dh.cwiseProduct(blk.ln_out);
    dfilm.tail(W) = dh;
    Gm(p + "film.W", 2 * W, cfg_.time_out) += dfilm * ws.te.transpose();
    Gv(p + "film.b", 2 * W) += dfilm;
    dte += M(p + "film.W", 2 * W, cfg_.time_out).transpose() * dfilm;
    Eigen::VectorXd dln = dh.cwiseProduct(blk.film.head(W));

    Gv(p + "ln_gain", W) += dln.cwiseProduct(blk.n_hat);
    Gv(p + "ln_bias", W) += dln;
    Eigen::VectorXd dn = dln.cwiseProduct(vec(theta, seg(p + "ln_gain").offset, W));
    const double dn_mean = dn.mean();
    const double dn_nhat_mean = dn.cwiseProduct(blk.n_hat).mean();
    Eigen::VectorXd dresid =
        blk.inv_std * (dn.array() - dn_mean - blk.n_hat.array() * dn_nhat_mean).matrix();

    // resid = h_in + W2 relu(W1 h_in + b1) + b2
    Gm(p + "W2", W, cfg_.block_hidden) += dresid * blk.m1.transpose();
    Gv(p + "b2", W) += dresid;
    Eigen::VectorXd dm1 = M(p + "W2", W, cfg_.block_hidden).transpose() * dresid;
    for (int i = 0; i < cfg_.block_hidden; ++i)
      if (blk.m1_pre(i) <= 0.0) dm1(i) = 0.0;
    Gm(p + "W1", cfg_.block_hidden, W) += dm1 * blk.h_in.transpose();
    Gv(p + "b1", cfg_.block_hidden) += dm1;
    dh = dresid + M(p + "W1", cfg_.block_hidden, W).transpose() * dm1;
  }

  // time embedding MLP
  Gm("time.W2", cfg_.time_out, cfg_.time_hidden) += dte * ws.te1.transpose();
  Gv("time.b2", cfg_.time_out) += dte;
  Eigen::VectorXd dte1 = M("time.W2", cfg_.time_out, cfg_.time_hidden).transpose() * dte;
  for (int i = 0; i < cfg_.time_hidden; ++i)
    if (ws.te1_pre(i) <= 0.0) dte1(i) = 0.0;
  Gm("time.W1", cfg_.time_hidden, cfg_.time_embed_dim) += dte1 * ws.embed.transpose();
  Gv("time.b1", cfg_.time_hidden) += dte1;

  Gm("lift.W", W, space_.D) += dh * ws.x_in.transpose();
  Gv("lift.b", W) += dh;
}

}  // namespace ctdd
