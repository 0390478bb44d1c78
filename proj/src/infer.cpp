#include "rmsnet/infer.hpp"

#include <algorithm>
#include <cmath>

namespace rmsnet {

std::vector<Index> window_starts(Index frames, Index clip_len, Index stride, bool cover_tail) {
    RMSNET_REQUIRE(frames >= clip_len, Input, "match of ", frames,
                   " frames is shorter than the clip length ", clip_len);
    RMSNET_REQUIRE(stride >= 1, Config, "stride must be >= 1, got ", stride);
    std::vector<Index> starts;
    for (Index s = 0; s + clip_len <= frames; s += stride) starts.push_back(s);
    if (cover_tail && starts.back() != frames - clip_len) starts.push_back(frames - clip_len);
    return starts;
}

namespace {

struct WindowSpot {
    Index start = 0;
    Index cls = 0;
    double confidence = 0.0;
    double position = 0.0;
    Index frame = 0;
};

// Non-background windows in start order.
std::vector<WindowSpot> run_windows(const RmsNetParams<float>& params, const RmsNetConfig& config,
                                    const MatchRecord& match, const std::vector<Index>& starts,
                                    const InferOptions& options) {
    const Index L = config.clip_len;
    RMSNET_REQUIRE(match.features.cols() == config.feature_dim, Dimension, "match ", match.id,
                   " has ", match.features.cols(), " feature channels, model expects ",
                   config.feature_dim);
    Rng unused(0);
    std::vector<WindowSpot> spots;
    const auto batch = static_cast<std::size_t>(std::max<Index>(1, options.batch));
    for (std::size_t first = 0; first < starts.size(); first += batch) {
        const std::size_t count = std::min(batch, starts.size() - first);
        MatrixF clips(static_cast<Index>(count) * L, config.feature_dim);
        for (std::size_t i = 0; i < count; ++i)
            clips.middleRows(static_cast<Index>(i) * L, L) =
                match.features.middleRows(starts[first + i], L);
        const auto out = forward(params, config, clips, false, unused);
        for (std::size_t i = 0; i < count; ++i) {
            const auto b = static_cast<Index>(i);
            Index cls = 0;
            out.probabilities.row(b).maxCoeff(&cls);
            if (cls == config.background()) continue;
            WindowSpot w;
            w.start = starts[first + i];
            w.cls = cls;
            w.confidence = out.probabilities(b, cls);
            const double offset =
                options.fixed_center ? 0.5 : static_cast<double>(out.predicted_offset(b));
            w.position = static_cast<double>(w.start) + offset * static_cast<double>(L);
            // nearest frame, ties to even
            w.frame = std::clamp(static_cast<Index>(std::nearbyint(w.position)), Index{0},
                                 match.length() - 1);
            spots.push_back(w);
        }
    }
    return spots;
}

} // namespace

std::vector<SpotPrediction> spot_match(const RmsNetParams<float>& params,
                                       const RmsNetConfig& config, const MatchRecord& match,
                                       const InferOptions& options) {
    const Index stride = options.stride > 0 ? options.stride : config.clip_len;
    const auto starts = window_starts(match.length(), config.clip_len, stride, options.cover_tail);
    std::vector<SpotPrediction> out;
    for (const auto& w : run_windows(params, config, match, starts, options)) {
        SpotPrediction p;
        p.match_id = match.id;
        p.frame = w.frame;
        p.position = w.position;
        p.seconds = match.seconds(w.frame);
        p.half = match.half_of(w.frame);
        p.cls = w.cls;
        p.confidence = w.confidence;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<SpotPrediction> spot_matches(const RmsNetParams<float>& params,
                                         const RmsNetConfig& config,
                                         std::span<const MatchRecord> matches,
                                         const InferOptions& options) {
    std::vector<SpotPrediction> out;
    for (const auto& m : matches) {
        auto spots = spot_match(params, config, m, options);
        out.insert(out.end(), std::make_move_iterator(spots.begin()),
                   std::make_move_iterator(spots.end()));
    }
    return out;
}

VoteDensity vote_density(const RmsNetParams<float>& params, const RmsNetConfig& config,
                         const MatchRecord& match, const InferOptions& options) {
    const auto starts = window_starts(match.length(), config.clip_len, 1, false);
    VoteDensity density;
    density.counts.assign(static_cast<std::size_t>(match.length()), 0);
    density.windows = static_cast<Index>(starts.size());
    for (const auto& w : run_windows(params, config, match, starts, options)) {
        ++density.counts[static_cast<std::size_t>(w.frame)];
        ++density.votes;
    }
    return density;
}

} // namespace rmsnet
