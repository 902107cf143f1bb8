#pragma once

#include <cstdint>
#include <string>

#include "rotot/rotot.hpp"

namespace rotot {

struct ModelMeta {
  std::uint64_t seed = 1;
};

// Versioned JSON text for a fitted model: shapes, CP factors, intercept,
// scales, penalty, loss parameters, the predictor decomposition needed to
// project new cases (center, projections, scales, covariance, refinement
// settings) and the fit metadata. Numbers are written in the shortest form
// that parses back to the identical double, so load(save(m)) reproduces every
// stored field bitwise. The per-training-case caches of the decomposition
// (cores, weights, imputations) are deliberately not persisted: prediction
// and diagnostics recompute projections from the data at hand.
std::string model_to_json(const RototModel& m, const ModelMeta& meta = {});

// Throws FileFormatError on malformed JSON, a wrong format tag or version,
// or missing/ill-typed fields.
RototModel model_from_json(const std::string& text, ModelMeta* meta = nullptr);

void save_model(const std::string& path, const RototModel& m,
                const ModelMeta& meta = {});
RototModel load_model(const std::string& path, ModelMeta* meta = nullptr);

}  // namespace rotot
