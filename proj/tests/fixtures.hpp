#pragma once

#include <vector>

#include "rmsnet/data.hpp"
#include "rmsnet/rng.hpp"
#include "rmsnet/synth.hpp"
#include "rmsnet/train.hpp"

namespace fixtures {

using namespace rmsnet;

// 100 fixed clips (25 per event class, 25 background) cut from a small
// synthetic corpus, for overfitting runs.
struct OverfitSet {
    std::vector<MatchRecord> matches;
    std::vector<ClipSample> samples;
};

inline OverfitSet overfit_set(std::uint64_t seed = 1) {
    SynthSpec spec;
    spec.num_matches = 12;
    spec.duration_s = 1200;
    spec.mean_event_gap_s = 120;
    OverfitSet set;
    Rng rng = substream(seed, "overfit-corpus");
    set.matches = synth_generate(spec, rng);
    const ClipPools pools = build_pools(set.matches, {});
    set.samples = epoch_sample(pools, 75, 3, rng);
    return set;
}

inline EpochContext overfit_context(const OverfitSet& set, Index epochs, Index batch) {
    EpochContext ctx;
    ctx.matches = set.matches;
    ctx.plan.max_epochs = epochs;
    ctx.plan.batch_size = batch;
    // default rate is tuned for batches of 64; scale it linearly with the batch
    ctx.plan.base_lr = TrainPlan{}.base_lr * static_cast<double>(batch) / 64.0;
    return ctx;
}

} // namespace fixtures
