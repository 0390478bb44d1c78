#include "rmsnet/synth.hpp"

#include <cmath>
#include <cstdio>

namespace rmsnet {

Index SynthSpec::num_frames() const {
    return static_cast<Index>(std::llround(duration_s * feature_rate));
}

void SynthSpec::validate() const {
    RMSNET_REQUIRE(num_matches >= 0, Config, "match count must be >= 0");
    RMSNET_REQUIRE(feature_rate > 0.0 && duration_s > 0.0, Config,
                   "duration and feature rate must be positive");
    RMSNET_REQUIRE(feature_dim >= 1 && num_classes >= 1, Config,
                   "feature dim and class count must be >= 1");
    RMSNET_REQUIRE(mean_event_gap_s > 0.0 && min_event_gap_s >= 0.0, Config,
                   "event gaps must be positive");
    RMSNET_REQUIRE(noise_std >= 0.0 && signature_strength >= 0.0 && pre_cue_strength >= 0.0,
                   Config, "noise and signature strengths must be >= 0");
    RMSNET_REQUIRE(signature_horizon >= 1 && pre_cue_horizon >= 0, Config,
                   "signature horizon must be >= 1");
}

namespace {

MatrixF random_directions(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<float> normal;
    MatrixF m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    m.rowwise().normalize();
    return m;
}

} // namespace

SignatureBasis signature_basis(const SynthSpec& spec) {
    Rng rng(spec.signature_seed);
    SignatureBasis basis;
    basis.post = random_directions(spec.num_classes, spec.feature_dim, rng);
    basis.pre = random_directions(spec.num_classes, spec.feature_dim, rng);
    return basis;
}

std::vector<MatchRecord> synth_generate(const SynthSpec& spec, Rng& rng) {
    spec.validate();
    const SignatureBasis basis = signature_basis(spec);
    const Index frames = spec.num_frames();
    const auto duration = static_cast<long>(std::floor(spec.duration_s));
    const auto half_s = duration / 2;

    std::vector<MatchRecord> matches;
    matches.reserve(static_cast<std::size_t>(spec.num_matches));
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_std));
    std::exponential_distribution<double> gap(1.0 / spec.mean_event_gap_s);
    std::uniform_int_distribution<Index> pick_class(0, spec.num_classes - 1);

    for (Index m = 0; m < spec.num_matches; ++m) {
        MatchRecord match;
        char id[64];
        std::snprintf(id, sizeof id, "%s_%03ld", spec.id_prefix.c_str(), static_cast<long>(m));
        match.id = id;
        match.feature_rate = spec.feature_rate;
        match.second_half_start =
            static_cast<Index>(std::llround(static_cast<double>(half_s) * spec.feature_rate));
        match.features.resize(frames, spec.feature_dim);
        for (Index i = 0; i < match.features.size(); ++i) match.features.data()[i] = noise(rng);

        // Events fall on whole seconds, like second-resolution annotations.
        double t = spec.min_event_gap_s / 2.0 + gap(rng);
        while (true) {
            const auto second = static_cast<long>(std::floor(t));
            const auto frame = static_cast<Index>(std::llround(second * spec.feature_rate));
            if (second >= duration || frame >= frames) break;
            Event e;
            e.frame = frame;
            e.cls = pick_class(rng);
            e.half = match.half_of(frame);
            match.events.push_back(e);
            t = static_cast<double>(second) + spec.min_event_gap_s + gap(rng);
        }

        for (const Event& e : match.events) {
            const auto post = basis.post.row(e.cls);
            for (Index k = 0; k < spec.signature_horizon && e.frame + k < frames; ++k) {
                const double decay = 1.0 - static_cast<double>(k) /
                                               static_cast<double>(spec.signature_horizon);
                match.features.row(e.frame + k) +=
                    static_cast<float>(spec.signature_strength * decay) * post;
            }
            const auto pre = basis.pre.row(e.cls);
            for (Index k = 1; k <= spec.pre_cue_horizon && e.frame - k >= 0; ++k)
                match.features.row(e.frame - k) += static_cast<float>(spec.pre_cue_strength) * pre;
        }
        matches.push_back(std::move(match));
    }
    return matches;
}

} // namespace rmsnet
