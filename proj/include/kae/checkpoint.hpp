#pragma once

#include <memory>
#include <string>

#include "kae/model.hpp"
#include "kae/optim.hpp"

namespace kae {

// Container layout: a text header (magic + one JSON line with format version,
// model config, vocabulary characters, seed, epoch, optimizer settings)
// followed by named tensors as little-endian float32 with explicit shapes.
// Parameters are float32-valued in memory, so the round-trip is bit-exact.
struct LoadedCheckpoint {
  std::unique_ptr<KaeModel> model;
  std::unique_ptr<Adam> optimizer;  // null when the file carries no state
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const std::string& path, const KaeModel& model,
                     const Adam* optimizer, std::uint64_t seed, int epoch);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace kae
