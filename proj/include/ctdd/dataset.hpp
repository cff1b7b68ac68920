#ifndef CTDD_DATASET_HPP
#define CTDD_DATASET_HPP

#include <string>
#include <vector>

#include "ctdd/config.hpp"
#include "ctdd/enumerable.hpp"

namespace ctdd {

// Dataset ingestion.  For sequence corpora the state-space permutation is
// applied here, so `distribution` lives in the model's (scrambled) space
// while `raw_sequences` keeps the original values for reporting.
struct Dataset {
  EnumerableDistribution distribution;   // internal space
  std::vector<State> raw_sequences;      // original space (sequences only)

  static Dataset load(const RunConfig& cfg);

  // 2D grid weights from an 8-bit PGM image (P2 or P5), sized S x S.
  // Dimension 0 is the column index, dimension 1 the row index.
  static Dataset from_pgm(const std::string& path, int S);
  static Dataset from_csv_points(const std::string& path, int S);
  static Dataset from_sequence_csv(const std::string& path, const StateSpace& space);
};

// Map internal-space samples back to the original value space.
std::vector<State> unpermute_samples(const std::vector<State>& samples, const StateSpace& space);

}  // namespace ctdd

#endif
