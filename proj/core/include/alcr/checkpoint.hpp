#pragma once

#include <string>

#include "alcr/model.hpp"

namespace alcr::model {

/// Stable hex digest of the model configuration plus vocabulary letters.
/// Two models agree on this iff their checkpoints are interchangeable.
std::string config_hash(const ModelConfig& config, const Vocabulary& vocab);

/// Binary checkpoint: magic "ALCR1", 4-byte little-endian metadata length,
/// UTF-8 JSON metadata (version, config hash, model config, vocabulary,
/// parameter names + shapes), then each parameter's values as little-endian
/// 64-bit floats, concatenated in metadata order.
void save_checkpoint(const std::string& path, const Seq2SeqModel& m);

/// Reconstructs the model from a checkpoint; throws on malformed files,
/// unknown versions, or shape mismatches.
Seq2SeqModel load_checkpoint(const std::string& path);

}  // namespace alcr::model
