#include "rmsnet/data.hpp"

#include <algorithm>
#include <numeric>

namespace rmsnet {

std::string class_name(Index cls) {
    if (cls >= 0 && cls < static_cast<Index>(kClassNames.size()))
        return std::string(kClassNames[static_cast<std::size_t>(cls)]);
    return "class" + std::to_string(cls);
}

Index class_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kClassNames.size(); ++i)
        if (kClassNames[i] == name) return static_cast<Index>(i);
    if (name.starts_with("class")) {
        const std::string digits(name.substr(5));
        if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit))
            return std::stol(digits);
    }
    detail::raise(ErrorKind::Parse, "unknown event label '", name, "'");
}

void MatchRecord::validate(Index num_classes, Index min_length) const {
    RMSNET_REQUIRE(length() >= min_length, Consistency, "match ", id, " has ", length(),
                   " frames, needs at least ", min_length);
    RMSNET_REQUIRE(features.allFinite(), Consistency, "match ", id, " has non-finite features");
    RMSNET_REQUIRE(feature_rate > 0.0, Consistency, "match ", id, " has feature rate ",
                   feature_rate);
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        RMSNET_REQUIRE(e.frame >= 0 && e.frame < length(), Consistency, "match ", id,
                       ": event frame ", e.frame, " outside [0, ", length(), ")");
        RMSNET_REQUIRE(e.cls >= 0 && e.cls < num_classes, Consistency, "match ", id,
                       ": event class ", e.cls, " outside [0, ", num_classes, ")");
        RMSNET_REQUIRE(i == 0 || events[i - 1].frame <= e.frame, Consistency, "match ", id,
                       ": events not sorted by frame");
    }
}

std::vector<ClipSample> extract_foreground_clips(const MatchRecord& match, std::size_t match_index,
                                                 Index clip_len) {
    RMSNET_REQUIRE(clip_len >= 1 && clip_len <= match.length(), Input, "clip length ", clip_len,
                   " does not fit match ", match.id, " of ", match.length(), " frames");
    std::vector<ClipSample> clips;
    for (const Event& e : match.events) {
        const Index first = std::max<Index>(0, e.frame - clip_len + 1);
        const Index last = std::min(e.frame, match.length() - clip_len);
        for (Index s = first; s <= last; ++s) {
            ClipSample c;
            c.match = match_index;
            c.start = s;
            c.length = clip_len;
            c.label = e.cls;
            c.event_frame = e.frame;
            c.offset = static_cast<double>(e.frame - s) / static_cast<double>(clip_len);
            clips.push_back(c);
        }
    }
    return clips;
}

std::vector<ClipSample> extract_background_clips(const MatchRecord& match, std::size_t match_index,
                                                 Index clip_len, Index num_classes) {
    RMSNET_REQUIRE(clip_len >= 1 && clip_len <= match.length(), Input, "clip length ", clip_len,
                   " does not fit match ", match.id, " of ", match.length(), " frames");
    std::vector<ClipSample> clips;
    auto tile = [&](Index begin, Index end) {
        for (Index s = begin; s + clip_len <= end; s += clip_len) {
            ClipSample c;
            c.match = match_index;
            c.start = s;
            c.length = clip_len;
            c.label = num_classes;
            clips.push_back(c);
        }
    };
    Index segment_start = 0;
    for (const Event& e : match.events) {
        tile(segment_start, e.frame);
        segment_start = std::max(segment_start, e.frame + 1);
    }
    tile(segment_start, match.length());
    return clips;
}

MatchRecord drop_halftime_substitutions(MatchRecord match, double window_s) {
    const double radius = window_s * match.feature_rate;
    std::erase_if(match.events, [&](const Event& e) {
        return e.cls == kSubstitution &&
               std::abs(static_cast<double>(e.frame - match.second_half_start)) <= radius;
    });
    return match;
}

std::size_t ClipPools::foreground_size() const {
    std::size_t n = 0;
    for (const auto& pool : foreground) n += pool.size();
    return n;
}

ClipPools build_pools(std::span<const MatchRecord> matches, const PoolOptions& options) {
    ClipPools pools;
    pools.foreground.resize(static_cast<std::size_t>(options.num_classes));
    for (std::size_t m = 0; m < matches.size(); ++m) {
        for (auto& c : extract_foreground_clips(matches[m], m, options.clip_len)) {
            if (options.center_only && c.event_frame - c.start != options.clip_len / 2) continue;
            RMSNET_REQUIRE(c.label < options.num_classes, Consistency, "event class ", c.label,
                           " in match ", matches[m].id, " exceeds ", options.num_classes - 1);
            pools.foreground[static_cast<std::size_t>(c.label)].push_back(c);
        }
        auto bg = extract_background_clips(matches[m], m, options.clip_len, options.num_classes);
        pools.background.insert(pools.background.end(), bg.begin(), bg.end());
    }
    return pools;
}

namespace {

void draw(const std::vector<ClipSample>& pool, std::size_t count, Rng& rng,
          std::vector<ClipSample>& out) {
    if (pool.size() >= count) {
        std::sample(pool.begin(), pool.end(), std::back_inserter(out),
                    static_cast<std::ptrdiff_t>(count), rng);
        return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(pool[pick(rng)]);
}

} // namespace

std::vector<ClipSample> epoch_sample(const ClipPools& pools, Index n_fg, Index num_classes,
                                     Rng& rng) {
    RMSNET_REQUIRE(num_classes >= 1 && n_fg >= num_classes, Config,
                   "need at least one foreground clip per class: n_fg=", n_fg,
                   ", classes=", num_classes);
    RMSNET_REQUIRE(static_cast<Index>(pools.foreground.size()) == num_classes, Config,
                   "pools hold ", pools.foreground.size(), " classes, expected ", num_classes);
    const auto per_class = static_cast<std::size_t>(n_fg / num_classes);
    for (Index c = 0; c < num_classes; ++c)
        RMSNET_REQUIRE(!pools.foreground[static_cast<std::size_t>(c)].empty(), Sampling,
                       "no foreground clips for class '", class_name(c), "'");
    RMSNET_REQUIRE(!pools.background.empty(), Sampling, "no background clips");

    std::vector<ClipSample> out;
    out.reserve(per_class * static_cast<std::size_t>(num_classes + 1));
    for (const auto& pool : pools.foreground) draw(pool, per_class, rng, out);
    draw(pools.background, per_class, rng, out);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

void MaskPolicy::validate() const {
    RMSNET_REQUIRE(p >= 0.0 && p <= 1.0, Config, "mask probability p=", p, " outside [0, 1]");
    RMSNET_REQUIRE(q >= 0.0 && q <= 1.0, Config, "mask offset q=", q, " outside [0, 1]");
}

std::string_view to_string(MaskSide side) {
    return side == MaskSide::Before ? "before" : "after";
}

MaskSide mask_side_from_string(std::string_view text) {
    if (text == "before") return MaskSide::Before;
    if (text == "after") return MaskSide::After;
    detail::raise(ErrorKind::Config, "mask side must be 'before' or 'after', got '", text, "'");
}

bool mask_applies(Index event_pos, Index clip_len, const MaskPolicy& policy, double u) {
    const Index distance = policy.side == MaskSide::Before ? event_pos : clip_len - 1 - event_pos;
    const double r = static_cast<double>(distance) / static_cast<double>(clip_len);
    return r <= policy.q && u < policy.p;
}

MatrixF apply_mask(const MatrixF& clip, const ClipSample& sample, const MaskPolicy& policy,
                   const BackgroundSource& background, Rng& rng) {
    RMSNET_REQUIRE(sample.is_foreground(), Usage, "background clips are never masked");
    RMSNET_REQUIRE(clip.rows() == sample.length, Dimension, "clip has ", clip.rows(),
                   " frames, sample says ", sample.length);
    const Index event_pos = sample.event_frame - sample.start;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    if (!mask_applies(event_pos, sample.length, policy, u)) return clip;

    const Index begin = policy.side == MaskSide::Before ? 0 : event_pos + 1;
    const Index count = policy.side == MaskSide::Before ? event_pos : sample.length - 1 - event_pos;
    if (count == 0) return clip;
    RMSNET_REQUIRE(!background.clips.empty(), Sampling, "masking needs background clips");

    std::uniform_int_distribution<std::size_t> pick(0, background.clips.size() - 1);
    const ClipSample& bg = background.clips[pick(rng)];
    std::uniform_int_distribution<Index> offset(0, bg.length - count);
    const Index from = bg.start + offset(rng);

    MatrixF out = clip;
    out.middleRows(begin, count) = background.matches[bg.match].features.middleRows(from, count);
    return out;
}

} // namespace rmsnet
