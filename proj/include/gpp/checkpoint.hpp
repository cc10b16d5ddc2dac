#pragma once

#include <string>

#include "gpp/trainer.hpp"

namespace gpp::checkpoint {

// Binary checkpoint: magic "GPP1", u32 version, then named tensor blocks
// {u32 name_len, name, u32 rows, u32 cols, rows*cols f64}, little-endian.
// Covers parameters, Adam moments, the rng stream, and the train config, so
// a load resumes the exact training trajectory.

void save_checkpoint(const trainer::TrainedModel& model, const std::string& path);

// Throws DataError on bad magic, version mismatch, or truncation; never
// returns a partially filled model.
trainer::TrainedModel load_checkpoint(const std::string& path);

}  // namespace gpp::checkpoint
