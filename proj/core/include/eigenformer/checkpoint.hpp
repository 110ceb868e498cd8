#pragma once

#include <string>

#include "eigenformer/model.hpp"

namespace eigenformer {

/// Versioned binary checkpoint, little-endian: magic "EIGF", u32 version,
/// u64 config digest, the config JSON, then named parameter blocks (length-
/// prefixed name, shape, raw doubles). Batch-norm running statistics are
/// stored as extra named blocks so eval-mode behavior round-trips.
void save_checkpoint(EigenformerModel& model, const std::string& path);

/// Rebuilds the model from the embedded config and loads every block.
/// Rejects magic/version problems and a header digest that does not match
/// the embedded config.
EigenformerModel load_checkpoint(const std::string& path);

} // namespace eigenformer
