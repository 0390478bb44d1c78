#pragma once

// Spots exchanged between inference and evaluation, and the prediction file.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rmsnet/data.hpp"

namespace rmsnet {

struct SpotPrediction {
    std::string match_id;
    Index frame = 0;       // rounded spot position
    double position = 0.0; // unrounded position in frames
    double seconds = 0.0;  // frame / feature_rate, from match start
    int half = 1;
    Index cls = 0;
    double confidence = 0.0;
};

struct GroundTruthSpot {
    std::string match_id;
    double seconds = 0.0;
    Index cls = 0;
};

std::vector<GroundTruthSpot> ground_truth(std::span<const MatchRecord> matches);

/// JSON document {"predictions": [...]} sorted by match and time.
void save_predictions(std::span<const SpotPrediction> predictions,
                      const std::filesystem::path& path);
std::vector<SpotPrediction> load_predictions(const std::filesystem::path& path);

} // namespace rmsnet
