#include "ctdd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctdd {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'D', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<char*>(&v), 8); }
void write_str(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  write_u64(out, static_cast<uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

uint32_t read_u32(std::istream& in) {
  uint32_t v;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string read_str(std::istream& in) {
  const uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}
Eigen::VectorXd read_vec(std::istream& in) {
  const uint64_t n = read_u64(in);
  Eigen::VectorXd v(static_cast<long>(n));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
  return v;
}

void check_stream(std::istream& in, const std::string& path) {
  if (!in) throw std::runtime_error("checkpoint: truncated or unreadable file " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg, const TrainableDenoiser& den,
                     const AdamOptimizer& opt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  const std::string cfg_json = cfg.to_json_text();
  write_str(out, cfg_json);
  write_u64(out, fnv1a(cfg_json));
  write_u64(out, static_cast<uint64_t>(opt.steps_taken()));

  const ParameterVector& params = den.params();
  write_u32(out, static_cast<uint32_t>(params.segments().size()));
  for (const auto& seg : params.segments()) {
    write_str(out, seg.name);
    write_u32(out, static_cast<uint32_t>(seg.shape.size()));
    for (long s : seg.shape) write_u64(out, static_cast<uint64_t>(s));
  }
  write_vec(out, params.values());
  write_vec(out, params.ema());
  write_vec(out, opt.state_m());
  write_vec(out, opt.state_v());
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

namespace {

CheckpointInfo load_impl(const std::string& path, TrainableDenoiser* den, AdamOptimizer* opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[8];
  in.read(magic, 8);
  check_stream(in, path);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(in);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");

  CheckpointInfo info;
  info.config_json = read_str(in);
  info.config_hash = read_u64(in);
  info.step = static_cast<long>(read_u64(in));

  const uint32_t nseg = read_u32(in);
  std::vector<ParamSegment> segs(nseg);
  for (uint32_t i = 0; i < nseg; ++i) {
    segs[i].name = read_str(in);
    const uint32_t rank = read_u32(in);
    segs[i].shape.resize(rank);
    segs[i].size = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      segs[i].shape[r] = static_cast<long>(read_u64(in));
      segs[i].size *= segs[i].shape[r];
    }
  }
  Eigen::VectorXd values = read_vec(in);
  Eigen::VectorXd ema = read_vec(in);
  Eigen::VectorXd m = read_vec(in);
  Eigen::VectorXd v = read_vec(in);
  check_stream(in, path);

  if (den) {
    ParameterVector& params = den->params();
    if (params.segments().size() != segs.size())
      throw std::runtime_error("checkpoint: segment count mismatch");
    for (size_t i = 0; i < segs.size(); ++i) {
      const auto& want = params.segments()[i];
      if (want.name != segs[i].name || want.shape != segs[i].shape)
        throw std::runtime_error("checkpoint: shape mismatch for segment " + segs[i].name);
    }
    if (params.size() != values.size())
      throw std::runtime_error("checkpoint: parameter size mismatch");
    params.values() = values;
    params.ema() = ema;
    if (opt) opt->restore(info.step, std::move(m), std::move(v));
  }
  return info;
}

}  // namespace

CheckpointInfo load_checkpoint(const std::string& path, TrainableDenoiser& den,
                               AdamOptimizer* opt) {
  return load_impl(path, &den, opt);
}

CheckpointInfo peek_checkpoint(const std::string& path) { return load_impl(path, nullptr, nullptr); }

}  // namespace ctdd
