#pragma once

// Sliding-window spotting over whole matches.

#include <span>
#include <vector>

#include "rmsnet/model.hpp"
#include "rmsnet/spot.hpp"

namespace rmsnet {

struct InferOptions {
    Index stride = 0;          // 0 means the clip length
    bool fixed_center = false; // ignore the regression head, assume offset 0.5
    bool cover_tail = true;    // add a final flush-right window
    Index batch = 128;         // windows per forward pass
};

/// Window start frames for a match of `frames` frames.
std::vector<Index> window_starts(Index frames, Index clip_len, Index stride, bool cover_tail);

/// One prediction per window whose most probable class is not background,
/// sorted by window start.
std::vector<SpotPrediction> spot_match(const RmsNetParams<float>& params,
                                       const RmsNetConfig& config, const MatchRecord& match,
                                       const InferOptions& options = {});

std::vector<SpotPrediction> spot_matches(const RmsNetParams<float>& params,
                                         const RmsNetConfig& config,
                                         std::span<const MatchRecord> matches,
                                         const InferOptions& options = {});

struct VoteDensity {
    std::vector<Index> counts; // per frame
    Index windows = 0;
    Index votes = 0;
};

/// Stride-1 windows; every non-background window votes for its spot frame.
VoteDensity vote_density(const RmsNetParams<float>& params, const RmsNetConfig& config,
                         const MatchRecord& match, const InferOptions& options = {});

} // namespace rmsnet
