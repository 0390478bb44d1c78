#pragma once

// Central finite-difference checks of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rmsnet/kernels.hpp"

namespace rmsnet {

struct GradCheckOptions {
    double epsilon = 1e-6;
    double tolerance = 1e-5;
    int directions = 4;  // random unit directions per tensor (tilted toward the gradient)
    int coordinates = 3; // largest-|gradient| coordinates per tensor
    double abs_floor = 1e-12;
    std::uint64_t seed = 7;
    /// Fourth-order five-point stencil instead of the plain central
    /// difference; allows a larger step, which keeps rounding noise down.
    bool fourth_order = false;
};

/// A tensor under test: `value` is perturbed in place by the check and
/// restored afterwards; `analytic` is the gradient to be verified.
struct GradCheckTarget {
    std::string name;
    MatrixD* value = nullptr;
    MatrixD analytic;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    int probes = 0;
    int skipped = 0; // probes discarded because they crossed a kink
    bool passed = true;
};

struct GradCheckReport {
    std::string label;
    double tolerance = 0.0;
    std::vector<GradCheckEntry> entries;

    bool passed() const {
        for (const auto& e : entries)
            if (!e.passed) return false;
        return true;
    }
    double max_error() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_error);
        return m;
    }
};

inline double relative_error(double analytic, double numeric, double abs_floor) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < abs_floor) return 0.0;
    return std::abs(analytic - numeric) / scale;
}

namespace detail {
inline std::optional<double> as_optional(std::optional<double> v) { return v; }
inline std::optional<double> as_optional(double v) { return v; }
} // namespace detail

/// Compares <analytic, v> with (f(w + eps v) - f(w - eps v)) / (2 eps) along
/// random unit directions and along the coordinates of largest analytic
/// gradient. `loss` re-evaluates the scalar objective from the current values;
/// it may return an empty optional when the perturbed point lies across a
/// non-differentiable kink, in which case the probe is replaced by another
/// direction (or the next-largest coordinate).
template <typename LossFn>
GradCheckReport grad_check(LossFn&& loss, std::span<GradCheckTarget> targets,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.tolerance = options.tolerance;
    Rng rng(options.seed);
    std::normal_distribution<double> normal;

    for (auto& target : targets) {
        MatrixD& w = *target.value;
        RMSNET_REQUIRE(w.rows() == target.analytic.rows() && w.cols() == target.analytic.cols(),
                       Dimension, "grad_check: gradient of ", target.name, " is ",
                       target.analytic.rows(), "x", target.analytic.cols(), ", parameter is ",
                       w.rows(), "x", w.cols());
        GradCheckEntry entry;
        entry.name = target.name;

        auto probe = [&](const MatrixD& direction) {
            const MatrixD saved = w;
            const double h = options.epsilon;
            auto at = [&](double step) {
                w = saved + step * direction;
                return detail::as_optional(loss());
            };
            std::optional<double> numeric;
            if (auto up = at(h), down = up ? at(-h) : std::nullopt; up && down) {
                if (!options.fourth_order) {
                    numeric = (*up - *down) / (2.0 * h);
                } else if (auto up2 = at(2 * h), down2 = up2 ? at(-2 * h) : std::nullopt;
                           up2 && down2) {
                    numeric = (8.0 * (*up - *down) - (*up2 - *down2)) / (12.0 * h);
                }
            }
            w = saved;
            if (!numeric) {
                ++entry.skipped;
                return false;
            }
            const double analytic = target.analytic.cwiseProduct(direction).sum();
            entry.max_rel_error = std::max(
                entry.max_rel_error, relative_error(analytic, *numeric, options.abs_floor));
            ++entry.probes;
            return true;
        };

        for (int d = 0, attempts = 0; d < options.directions && attempts < 8 * options.directions;
             ++attempts) {
            // Half analytic-gradient direction, half random: a purely random
            // direction can make <g, v> cancel to nearly zero, and the relative
            // error then measures rounding noise rather than the gradient.
            MatrixD v(w.rows(), w.cols());
            for (Index i = 0; i < v.size(); ++i) v.data()[i] = normal(rng);
            v /= v.norm();
            if (const double gn = target.analytic.norm(); gn > 0.0) {
                v += target.analytic / gn;
                v /= v.norm();
            }
            if (probe(v)) ++d;
        }

        std::vector<Index> order(static_cast<std::size_t>(w.size()));
        for (Index i = 0; i < w.size(); ++i) order[static_cast<std::size_t>(i)] = i;
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            return std::abs(target.analytic.data()[a]) > std::abs(target.analytic.data()[b]);
        });
        const auto wanted = static_cast<std::size_t>(std::max(options.coordinates, 0));
        std::size_t done = 0;
        for (std::size_t k = 0; k < order.size() && done < wanted && k < 8 * wanted; ++k) {
            MatrixD e = MatrixD::Zero(w.rows(), w.cols());
            e.data()[order[k]] = 1.0;
            if (probe(e)) ++done;
        }

        // a tensor whose every probe crossed a kink has not been verified
        entry.passed = entry.probes > 0 && entry.max_rel_error < options.tolerance;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace rmsnet
