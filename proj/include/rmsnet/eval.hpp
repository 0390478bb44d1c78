#pragma once

// Average-mAP spotting metric: per-class AP at a temporal tolerance, mAP over
// event classes, and the normalized area under the mAP-vs-tolerance curve.

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "rmsnet/spot.hpp"

namespace rmsnet {

enum class MatchingPolicy {
    OneToOne,  // each ground-truth spot absorbs at most one prediction
    ManyToOne, // any prediction near a ground-truth spot is a true positive
};

std::string_view to_string(MatchingPolicy policy);
MatchingPolicy matching_policy_from_string(std::string_view text);

/// AP of one class at tolerance `delta` seconds. Predictions are ranked by
/// descending confidence (ties keep input order); a prediction is a true
/// positive when a ground-truth spot of the same match lies within `delta`
/// (<=), the closest unmatched one being consumed. AP is the all-points
/// interpolated area under the precision/recall curve. A class without
/// ground truth scores 0.
double ap_at_delta(std::span<const SpotPrediction> predictions,
                   std::span<const GroundTruthSpot> truth, double delta, Index cls,
                   MatchingPolicy policy = MatchingPolicy::OneToOne);

/// Mean AP over the event classes that have at least one ground-truth spot.
double map_at_delta(std::span<const SpotPrediction> predictions,
                    std::span<const GroundTruthSpot> truth, double delta, Index num_classes,
                    MatchingPolicy policy = MatchingPolicy::OneToOne);

/// Trapezoidal area under (x, y) divided by the span of x.
double trapezoid_mean(std::span<const double> x, std::span<const double> y);

std::vector<double> default_delta_grid();

/// "start:stop:step" in seconds, inclusive of stop.
std::vector<double> parse_delta_grid(std::string_view text);

struct EvalReport {
    std::vector<double> deltas;
    std::vector<std::vector<double>> per_class_ap; // [class][delta]
    std::vector<double> map;                       // [delta]
    double average_map = 0.0;
    std::vector<double> per_class_average_ap;      // [class]
};

struct EvalOptions {
    std::vector<double> deltas = default_delta_grid();
    Index num_classes = 3;
    MatchingPolicy matching = MatchingPolicy::OneToOne;
};

EvalReport average_map(std::span<const SpotPrediction> predictions,
                       std::span<const GroundTruthSpot> truth, const EvalOptions& options = {});

/// Writes map_curve.csv, ap_curve.csv and summary.json into `dir`.
void export_curves(const EvalReport& report, const std::filesystem::path& dir);
EvalReport read_curves(const std::filesystem::path& dir);

} // namespace rmsnet
