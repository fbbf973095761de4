#pragma once

#include "bsf/pipeline.hpp"

#include <string>

namespace bsf::checkpoint {

// Single text document: kind tag, hyperparameters, scaler, and every tensor
// serialized row-major with 17 significant digits, so binary64 values
// round-trip bit-exactly and identical models produce identical bytes.
void save_checkpoint(const pipeline::ForecastModel& model, const std::string& path);
pipeline::ForecastModel load_checkpoint(const std::string& path);

std::string checkpoint_to_string(const pipeline::ForecastModel& model);
pipeline::ForecastModel checkpoint_from_string(const std::string& text);

} // namespace bsf::checkpoint
