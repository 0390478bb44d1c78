#include "rmsnet/train.hpp"

#include <algorithm>

#include "rmsnet/infer.hpp"
#include "rmsnet/rng.hpp"

namespace rmsnet {

void TrainPlan::validate() const {
    RMSNET_REQUIRE(max_epochs >= 1, Config, "max epochs must be >= 1");
    RMSNET_REQUIRE(batch_size >= 1, Config, "batch size must be >= 1");
    RMSNET_REQUIRE(patience >= 1, Config, "patience must be >= 1");
    RMSNET_REQUIRE(base_lr >= 0.0, Config, "learning rate must be >= 0");
    RMSNET_REQUIRE(momentum >= 0.0 && momentum < 1.0, Config, "momentum outside [0, 1)");
    RMSNET_REQUIRE(weight_decay >= 0.0, Config, "weight decay must be >= 0");
    RMSNET_REQUIRE(fg_per_epoch >= 1, Config, "foreground clips per epoch must be >= 1");
}

double lr_at(Index step, Index steps_per_epoch, const TrainPlan& plan) {
    RMSNET_REQUIRE(step >= 0 && steps_per_epoch >= 1, Config, "invalid schedule position ", step,
                   "/", steps_per_epoch);
    if (step < steps_per_epoch)
        return plan.base_lr * static_cast<double>(step + 1) / static_cast<double>(steps_per_epoch);
    if (plan.max_epochs <= 1) return 0.0;
    const double epochs = static_cast<double>(step) / static_cast<double>(steps_per_epoch);
    const double progress =
        std::min(1.0, (epochs - 1.0) / static_cast<double>(plan.max_epochs - 1));
    return plan.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

EarlyStop early_stop_check(std::span<const double> history, Index patience) {
    RMSNET_REQUIRE(!history.empty(), EmptyInput, "early stopping needs at least one epoch");
    RMSNET_REQUIRE(patience >= 1, Config, "patience must be >= 1");
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i] > history[best]) best = i;
    EarlyStop r;
    r.best_epoch = static_cast<Index>(best) + 1;
    r.stop = static_cast<Index>(history.size() - 1 - best) >= patience;
    return r;
}

Batch assemble_batch(std::span<const ClipSample> samples, const EpochContext& ctx, Rng& mask_rng) {
    const Index L = ctx.model.clip_len;
    Batch batch;
    batch.clips.resize(static_cast<Index>(samples.size()) * L, ctx.model.feature_dim);
    batch.targets.reserve(samples.size());
    const BackgroundSource source{ctx.matches, ctx.background};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ClipSample& s = samples[i];
        RMSNET_REQUIRE(s.length == L, Dimension, "sample of length ", s.length,
                       " for a model with clip length ", L);
        const MatchRecord& match = ctx.matches[s.match];
        auto rows = batch.clips.middleRows(static_cast<Index>(i) * L, L);
        if (s.is_foreground() && ctx.mask) {
            rows = apply_mask(MatrixF(clip_features(match, s)), s, *ctx.mask, source, mask_rng);
        } else {
            rows = clip_features(match, s);
        }
        batch.targets.push_back({s.label, s.offset});
    }
    return batch;
}

EpochMetrics train_epoch(RmsNetParams<float>& params, OptimizerState<float>& state,
                         std::span<const ClipSample> samples, const EpochContext& ctx,
                         Index epoch, Rng& mask_rng, Rng& dropout_rng) {
    RMSNET_REQUIRE(!samples.empty(), EmptyInput, "empty epoch");
    const auto batch_size = static_cast<std::size_t>(ctx.plan.batch_size);
    const auto steps = static_cast<Index>((samples.size() + batch_size - 1) / batch_size);

    EpochMetrics metrics;
    metrics.epoch = epoch + 1;
    double loss_sum = 0.0, cls_sum = 0.0, regr_sum = 0.0, abs_err = 0.0;
    Index correct = 0, foreground = 0;
    for (Index step = 0; step < steps; ++step) {
        const std::size_t first = static_cast<std::size_t>(step) * batch_size;
        const auto chunk = samples.subspan(first, std::min(batch_size, samples.size() - first));
        const Batch batch = assemble_batch(chunk, ctx, mask_rng);

        auto result = loss_and_grads(params, ctx.model, batch.clips,
                                     std::span<const ClipTarget>(batch.targets), true, dropout_rng);
        RMSNET_REQUIRE(std::isfinite(result.loss.total), Numeric, "non-finite loss at epoch ",
                       epoch + 1, " step ", step + 1);
        const double lr = lr_at(epoch * steps + step, steps, ctx.plan);
        sgd_step(params, result.grads, state, lr);

        const auto n = static_cast<double>(chunk.size());
        loss_sum += static_cast<double>(result.loss.total) * n;
        cls_sum += static_cast<double>(result.loss.cls) * n;
        regr_sum += static_cast<double>(result.loss.regr) * static_cast<double>(result.loss.foreground);
        abs_err += result.loss.abs_offset_error;
        correct += result.loss.correct;
        foreground += result.loss.foreground;
        metrics.lr = lr;
    }
    const auto total = static_cast<double>(samples.size());
    metrics.samples = static_cast<Index>(samples.size());
    metrics.loss = loss_sum / total;
    metrics.cls = cls_sum / total;
    metrics.regr = foreground > 0 ? regr_sum / static_cast<double>(foreground) : 0.0;
    metrics.offset_mae = foreground > 0 ? abs_err / static_cast<double>(foreground) : 0.0;
    metrics.accuracy = static_cast<double>(correct) / total;
    return metrics;
}

Index effective_fg_per_epoch(const ClipPools& pools, const TrainPlan& plan, Index num_classes) {
    const auto available = static_cast<Index>(pools.foreground_size());
    const Index n = std::min(plan.fg_per_epoch, available);
    return n - n % num_classes;
}

TrainResult fit(std::span<const MatchRecord> train, std::span<const MatchRecord> val,
                const TrainOptions& options,
                const std::function<void(const EpochMetrics&)>& on_epoch) {
    options.model.validate();
    options.plan.validate();
    options.mask.validate();
    const Index C = options.model.num_classes;

    std::vector<MatchRecord> matches(train.begin(), train.end());
    if (options.drop_halftime_substitutions)
        for (auto& m : matches) m = drop_halftime_substitutions(std::move(m), options.halftime_window_s);
    for (const auto& m : matches) {
        m.validate(C, options.model.clip_len);
        RMSNET_REQUIRE(m.features.cols() == options.model.feature_dim, Dimension, "match ", m.id,
                       " has ", m.features.cols(), " feature channels, model expects ",
                       options.model.feature_dim);
    }

    PoolOptions pool_options;
    pool_options.clip_len = options.model.clip_len;
    pool_options.num_classes = C;
    pool_options.center_only = options.center_clips_only;
    const ClipPools pools = build_pools(matches, pool_options);
    const Index n_fg = effective_fg_per_epoch(pools, options.plan, C);

    Rng init_rng = substream(options.seed, "init");
    Rng sampling_rng = substream(options.seed, "sampling");
    Rng mask_rng = substream(options.seed, "masking");
    Rng dropout_rng = substream(options.seed, "dropout");

    RmsNetParams<float> params = init_params<float>(options.model, init_rng);
    auto state = OptimizerState<float>::zeros_like(params, options.plan.momentum,
                                                   options.plan.weight_decay);
    EpochContext ctx;
    ctx.matches = matches;
    ctx.background = pools.background;
    if (options.masking) ctx.mask = options.mask;
    ctx.model = options.model;
    ctx.plan = options.plan;

    InferOptions infer;
    infer.fixed_center = options.fixed_center;
    EvalOptions eval = options.eval;
    eval.num_classes = C;
    const auto val_truth = ground_truth(val);

    TrainResult result;
    result.best = params;
    std::vector<double> val_history;
    for (Index epoch = 0; epoch < options.plan.max_epochs; ++epoch) {
        const auto samples = epoch_sample(pools, n_fg, C, sampling_rng);
        EpochMetrics metrics =
            train_epoch(params, state, samples, ctx, epoch, mask_rng, dropout_rng);
        if (!val.empty()) {
            const auto predictions = spot_matches(params, options.model, val, infer);
            metrics.val_average_map = average_map(predictions, val_truth, eval).average_map;
            val_history.push_back(*metrics.val_average_map);
        }
        result.history.push_back(metrics);
        if (on_epoch) on_epoch(metrics);

        if (val_history.empty()) {
            result.best = params;
            result.best_epoch = metrics.epoch;
            continue;
        }
        const EarlyStop decision = early_stop_check(val_history, options.plan.patience);
        if (decision.best_epoch == metrics.epoch) {
            result.best = params;
            result.best_epoch = metrics.epoch;
        }
        if (decision.stop) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

} // namespace rmsnet
