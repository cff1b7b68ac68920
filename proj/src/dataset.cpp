#include "ctdd/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ctdd {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

bool blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

Dataset Dataset::from_pgm(const std::string& path, int S) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("dataset: cannot read " + path);
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P5")
    throw std::invalid_argument("dataset: " + path + " is not a PGM image");
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw std::invalid_argument("dataset: truncated PGM header in " + path);
  };
  const int width = std::stoi(next_token());
  const int height = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (width != S || height != S)
    throw std::invalid_argument("dataset: PGM size does not match state space S");
  if (maxval <= 0 || maxval > 255)
    throw std::invalid_argument("dataset: PGM must be 8-bit");

  std::vector<double> pixels(static_cast<size_t>(S) * S, 0.0);
  if (magic == "P2") {
    for (auto& p : pixels) {
      int v;
      if (!(in >> v)) throw std::invalid_argument("dataset: truncated PGM data");
      p = v;
    }
  } else {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> buf(pixels.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw std::invalid_argument("dataset: truncated PGM data");
    for (size_t i = 0; i < buf.size(); ++i) pixels[i] = buf[i];
  }

  std::vector<State> support;
  std::vector<double> weights;
  for (int row = 0; row < S; ++row) {
    for (int col = 0; col < S; ++col) {
      const double w = pixels[static_cast<size_t>(row) * S + col];
      if (w <= 0.0) continue;
      support.push_back(State{col, row});
      weights.push_back(w);
    }
  }
  if (support.empty()) throw std::invalid_argument("dataset: image has zero total mass");
  Dataset ds;
  ds.distribution = EnumerableDistribution::from_points(
      std::move(support), Eigen::Map<Eigen::VectorXd>(weights.data(), weights.size()));
  return ds;
}

Dataset Dataset::from_csv_points(const std::string& path, int S) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("dataset: cannot read " + path);
  std::vector<State> support;
  std::vector<double> weights;
  std::string line;
  while (std::getline(in, line)) {
    if (blank_or_comment(line)) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw std::invalid_argument("dataset: csv_points rows must be x0,x1,weight");
    const int a = std::stoi(fields[0]);
    const int b = std::stoi(fields[1]);
    const double w = std::stod(fields[2]);
    if (a < 0 || a >= S || b < 0 || b >= S)
      throw std::invalid_argument("dataset: point outside [0, S-1]");
    if (w < 0.0) throw std::invalid_argument("dataset: negative weight");
    if (w == 0.0) continue;
    support.push_back(State{a, b});
    weights.push_back(w);
  }
  if (support.empty()) throw std::invalid_argument("dataset: no points with positive weight");
  Dataset ds;
  ds.distribution = EnumerableDistribution::from_points(
      std::move(support), Eigen::Map<Eigen::VectorXd>(weights.data(), weights.size()));
  return ds;
}

Dataset Dataset::from_sequence_csv(const std::string& path, const StateSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("dataset: cannot read " + path);
  Dataset ds;
  std::string line;
  while (std::getline(in, line)) {
    if (blank_or_comment(line)) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != space.D)
      throw std::invalid_argument("dataset: sequence row length != D");
    State row(space.D);
    for (int d = 0; d < space.D; ++d) {
      row[d] = std::stoi(fields[d]);
      if (row[d] < 0 || row[d] >= space.S)
        throw std::invalid_argument("dataset: sequence value outside [0, S-1]");
    }
    ds.raw_sequences.push_back(std::move(row));
  }
  if (ds.raw_sequences.empty()) throw std::invalid_argument("dataset: empty sequence corpus");

  std::map<State, double> counts;
  for (const State& row : ds.raw_sequences) {
    State internal = row;
    if (space.permutation)
      for (int d = 0; d < space.D; ++d) internal[d] = (*space.permutation)[row[d]];
    counts[internal] += 1.0;
  }
  std::vector<State> support;
  std::vector<double> weights;
  for (const auto& [state, count] : counts) {
    support.push_back(state);
    weights.push_back(count);
  }
  ds.distribution = EnumerableDistribution::from_points(
      std::move(support), Eigen::Map<Eigen::VectorXd>(weights.data(), weights.size()));
  return ds;
}

Dataset Dataset::load(const RunConfig& cfg) {
  if (cfg.dataset_path.empty())
    throw std::invalid_argument("dataset: no path configured");
  if (cfg.dataset_format == "image_histogram") {
    if (cfg.D != 2) throw std::invalid_argument("dataset: image histograms need D = 2");
    return from_pgm(cfg.dataset_path, cfg.S);
  }
  if (cfg.dataset_format == "csv_points") {
    if (cfg.D != 2) throw std::invalid_argument("dataset: point files need D = 2");
    return from_csv_points(cfg.dataset_path, cfg.S);
  }
  return from_sequence_csv(cfg.dataset_path, cfg.state_space());
}

std::vector<State> unpermute_samples(const std::vector<State>& samples, const StateSpace& space) {
  if (!space.permutation) return samples;
  const std::vector<int> inv = space.inverse_permutation();
  std::vector<State> out = samples;
  for (State& x : out)
    for (int& v : x) v = inv[v];
  return out;
}

}  // namespace ctdd
