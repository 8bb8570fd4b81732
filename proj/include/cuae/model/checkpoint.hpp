#pragma once

#include <string>

#include "cuae/model/train.hpp"

namespace cuae::model {

/// JSON snapshot of the whole training state: config, named parameter and
/// buffer tensors, optimizer moments, epoch counter, and the exact RNG
/// stream position. Loading reproduces the run bit for bit.
void save_checkpoint(const std::string& path, TrainState& st);
TrainState load_checkpoint(const std::string& path);

}  // namespace cuae::model
