#ifndef CTDD_CHECKPOINT_HPP
#define CTDD_CHECKPOINT_HPP

#include <string>

#include "ctdd/config.hpp"
#include "ctdd/denoiser.hpp"
#include "ctdd/parameters.hpp"

namespace ctdd {

// Versioned binary container: named parameter segments, EMA shadow, optimizer
// state, step count and the full run config.  Loading fails loudly on any
// shape or segment-name mismatch.
void save_checkpoint(const std::string& path, const RunConfig& cfg, const TrainableDenoiser& den,
                     const AdamOptimizer& opt);

struct CheckpointInfo {
  long step = 0;
  uint64_t config_hash = 0;
  std::string config_json;
};

// Restores parameters + EMA into `den` and, when given, the optimizer state.
CheckpointInfo load_checkpoint(const std::string& path, TrainableDenoiser& den,
                               AdamOptimizer* opt = nullptr);

CheckpointInfo peek_checkpoint(const std::string& path);

}  // namespace ctdd

#endif
