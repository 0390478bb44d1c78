#pragma once

// Matches, clip extraction, balanced epoch sampling and the masking
// augmentation. All positions are feature-frame indices; seconds only appear
// at file boundaries through `feature_rate`.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rmsnet/kernels.hpp"

namespace rmsnet {

inline constexpr std::array<std::string_view, 3> kClassNames = {"goal", "card", "substitution"};
inline constexpr Index kSubstitution = 2;

std::string class_name(Index cls);
/// Inverse of class_name for the event classes; throws Parse on unknown names.
Index class_from_name(std::string_view name);

struct Event {
    Index frame = 0;
    Index cls = 0;
    int half = 1;

    friend bool operator==(const Event&, const Event&) = default;
};

struct MatchRecord {
    std::string id;
    MatrixF features; // frames x feature_dim
    std::vector<Event> events;
    double feature_rate = 2.0;
    Index second_half_start = 0; // first frame of half 2

    Index length() const { return features.rows(); }
    double seconds(Index frame) const { return static_cast<double>(frame) / feature_rate; }
    int half_of(Index frame) const { return frame >= second_half_start ? 2 : 1; }

    /// Sorted events inside the match with valid classes; throws Consistency.
    void validate(Index num_classes, Index min_length = 1) const;
};

/// A window [start, start + length) of one match. Foreground clips carry the
/// class and frame of the event they were cut around; `offset` is
/// (event_frame - start) / length.
struct ClipSample {
    std::size_t match = 0; // index into the corpus the pools were built from
    Index start = 0;
    Index length = 0;
    Index label = 0;       // event class, or num_classes for background
    Index event_frame = -1;
    std::optional<double> offset;

    bool is_foreground() const { return offset.has_value(); }
};

std::vector<ClipSample> extract_foreground_clips(const MatchRecord& match, std::size_t match_index,
                                                 Index clip_len);

std::vector<ClipSample> extract_background_clips(const MatchRecord& match, std::size_t match_index,
                                                 Index clip_len, Index num_classes);

/// Removes substitutions within `window_s` seconds of the half-time boundary.
MatchRecord drop_halftime_substitutions(MatchRecord match, double window_s);

struct ClipPools {
    std::vector<std::vector<ClipSample>> foreground; // one pool per event class
    std::vector<ClipSample> background;

    std::size_t foreground_size() const;
};

struct PoolOptions {
    Index clip_len = 41;
    Index num_classes = 3;
    /// Keep only foreground clips with the event at frame clip_len / 2.
    bool center_only = false;
};

ClipPools build_pools(std::span<const MatchRecord> matches, const PoolOptions& options);

/// n_fg / C clips per event class plus n_fg / C background clips, shuffled.
/// Draws without replacement when a pool is large enough, with replacement
/// otherwise.
std::vector<ClipSample> epoch_sample(const ClipPools& pools, Index n_fg, Index num_classes,
                                     Rng& rng);

enum class MaskSide { Before, After };

struct MaskPolicy {
    double p = 1.0 / 3.0;
    double q = 0.5;
    MaskSide side = MaskSide::Before;

    void validate() const;
};

std::string_view to_string(MaskSide side);
MaskSide mask_side_from_string(std::string_view text);

/// Whether a clip with event at frame `event_pos` of `clip_len` is masked for
/// a uniform draw `u`.
bool mask_applies(Index event_pos, Index clip_len, const MaskPolicy& policy, double u);

struct BackgroundSource {
    std::span<const MatchRecord> matches;
    std::span<const ClipSample> clips;
};

/// Replaces every frame before the event (after it, for MaskSide::After) with
/// a contiguous run of equal length from one random background clip.
MatrixF apply_mask(const MatrixF& clip, const ClipSample& sample, const MaskPolicy& policy,
                   const BackgroundSource& background, Rng& rng);

/// Feature rows of a clip.
inline auto clip_features(const MatchRecord& match, const ClipSample& clip) {
    return match.features.middleRows(clip.start, clip.length);
}

// ---------------------------------------------------------------------------
// Files

/// "H - MM:SS" -> (half, seconds into the half).
std::pair<int, int> parse_game_time(std::string_view text);
std::string format_game_time(int half, int seconds);

void save_features(const MatrixF& features, const std::filesystem::path& path);
MatrixF load_features(const std::filesystem::path& path);

/// Plain dump: u32 rows, u32 cols, rows*cols little-endian float32.
MatrixF import_raw_features(const std::filesystem::path& path);

void save_labels(const MatchRecord& match, const std::filesystem::path& path);

void save_match(const MatchRecord& match, const std::filesystem::path& features_path,
                const std::filesystem::path& labels_path);
MatchRecord load_match(const std::filesystem::path& features_path,
                       const std::filesystem::path& labels_path, Index num_classes = 3);

/// Loads every `<id>.rmsf` + `<id>.json` pair of a split directory, by id.
std::vector<MatchRecord> load_split(const std::filesystem::path& dir, Index num_classes = 3);

} // namespace rmsnet
