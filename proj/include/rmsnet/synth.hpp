#pragma once

// Synthetic matches: isotropic Gaussian frames with class-specific signatures
// planted at and after each event, plus a weaker cue just before it.

#include <cstdint>
#include <string>
#include <vector>

#include "rmsnet/data.hpp"

namespace rmsnet {

struct SynthSpec {
    Index num_matches = 1;
    double duration_s = 600.0;
    double feature_rate = 2.0;
    Index feature_dim = 512;
    Index num_classes = 3;
    double mean_event_gap_s = 414.0; // 6.9 minutes
    double min_event_gap_s = 60.0;
    double noise_std = 1.0;
    /// Per-frame amplitude of the post-event signature along its class direction.
    double signature_strength = 6.0;
    Index signature_horizon = 40; // frames, linear decay to zero
    double pre_cue_strength = 1.0;
    Index pre_cue_horizon = 6; // frames immediately before the event
    /// Class directions are drawn from this seed so every split shares them.
    std::uint64_t signature_seed = 1234;
    std::string id_prefix = "match";

    Index num_frames() const;
    void validate() const;
};

/// Per-class unit directions (num_classes x feature_dim) for the signatures
/// and the pre-event cues.
struct SignatureBasis {
    MatrixF post;
    MatrixF pre;
};

SignatureBasis signature_basis(const SynthSpec& spec);

std::vector<MatchRecord> synth_generate(const SynthSpec& spec, Rng& rng);

} // namespace rmsnet
