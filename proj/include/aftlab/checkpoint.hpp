#pragma once

#include <string>

#include "aftlab/models.hpp"

namespace aftlab::models {

// Checkpoint container: magic "AFTL", format version, model spec, build seed,
// then each parameter as name, role, shape and raw little-endian 64-bit float
// data. Round-trips are bitwise exact.

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);  // throws std::runtime_error on bad files

}  // namespace aftlab::models
