#ifndef RPNET_CHECKPOINT_HPP
#define RPNET_CHECKPOINT_HPP

#include <string>

#include "rpnet/harness.hpp"

namespace rpnet {

/// Binary checkpoint: magic "RPNET1", u16 format version, ModelSpec fields,
/// pipeline descriptor string, then a tensor table of (name, rank, dims,
/// little-endian float32 data). Round trips are bitwise exact. Optimizer
/// state is not serialized; reloaded checkpoints resume with fresh state.
void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace rpnet

#endif  // RPNET_CHECKPOINT_HPP
