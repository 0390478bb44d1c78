#pragma once

// SGD with momentum, linear warm-up then cosine annealing, early stopping on
// validation Average-mAP.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "rmsnet/data.hpp"
#include "rmsnet/eval.hpp"
#include "rmsnet/model.hpp"

namespace rmsnet {

template <typename Scalar>
struct OptimizerState {
    std::vector<Matrix<Scalar>> velocity; // one buffer per parameter tensor
    double momentum = 0.9;
    double weight_decay = 1e-4;

    static OptimizerState zeros_like(const RmsNetParams<Scalar>& params, double momentum,
                                     double weight_decay) {
        RMSNET_REQUIRE(momentum >= 0.0 && momentum < 1.0, Config, "momentum ", momentum,
                       " outside [0, 1)");
        OptimizerState s;
        s.momentum = momentum;
        s.weight_decay = weight_decay;
        params.for_each([&](std::string_view, const Matrix<Scalar>& m) {
            s.velocity.push_back(Matrix<Scalar>::Zero(m.rows(), m.cols()));
        });
        return s;
    }
};

/// v <- m v + g + wd w;  w <- w - lr v. Nothing is modified when a gradient
/// is non-finite.
template <typename Scalar>
void sgd_step(RmsNetParams<Scalar>& params, const RmsNetParams<Scalar>& grads,
              OptimizerState<Scalar>& state, double lr) {
    RMSNET_REQUIRE(params.same_shapes(grads), Dimension, "sgd_step: gradient shapes differ");
    RMSNET_REQUIRE(state.velocity.size() == kParamNames.size(), Dimension,
                   "sgd_step: optimizer state has ", state.velocity.size(), " buffers");
    grads.for_each([](std::string_view name, const Matrix<Scalar>& g) {
        RMSNET_REQUIRE(g.allFinite(), Numeric, "non-finite gradient in ", name);
    });
    std::vector<const Matrix<Scalar>*> g;
    grads.for_each([&](std::string_view, const Matrix<Scalar>& m) { g.push_back(&m); });
    const auto m = static_cast<Scalar>(state.momentum);
    const auto wd = static_cast<Scalar>(state.weight_decay);
    const auto step = static_cast<Scalar>(lr);
    std::size_t i = 0;
    params.for_each([&](std::string_view, Matrix<Scalar>& w) {
        Matrix<Scalar>& v = state.velocity[i];
        RMSNET_REQUIRE(v.rows() == w.rows() && v.cols() == w.cols(), Dimension,
                       "sgd_step: velocity buffer ", i, " has the wrong shape");
        v = m * v + *g[i] + wd * w;
        w -= step * v;
        ++i;
    });
}

struct TrainPlan {
    Index max_epochs = 50;
    Index batch_size = 64;
    double base_lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    Index patience = 10;
    Index fg_per_epoch = 30000; // capped at the foreground pool size

    void validate() const;
};

/// Linear warm-up over the first epoch, then cosine annealing to zero at the
/// end of `max_epochs`, at per-step granularity.
double lr_at(Index step, Index steps_per_epoch, const TrainPlan& plan);

struct EarlyStop {
    bool stop = false;
    Index best_epoch = 0; // 1-based, first occurrence of the best value
};

EarlyStop early_stop_check(std::span<const double> history, Index patience);

struct EpochMetrics {
    Index epoch = 0; // 1-based
    double loss = 0.0;
    double cls = 0.0;
    double regr = 0.0;
    double accuracy = 0.0;
    double offset_mae = 0.0; // mean |sigmoid(o) - r| over foreground clips
    double lr = 0.0;         // at the last step of the epoch
    Index samples = 0;
    std::optional<double> val_average_map;
};

struct EpochContext {
    std::span<const MatchRecord> matches;
    std::span<const ClipSample> background; // masking source
    std::optional<MaskPolicy> mask;         // none disables masking
    RmsNetConfig model;
    TrainPlan plan;
};

/// One pass over `samples` in batches; `epoch` is 0-based and positions the
/// learning-rate schedule.
EpochMetrics train_epoch(RmsNetParams<float>& params, OptimizerState<float>& state,
                         std::span<const ClipSample> samples, const EpochContext& ctx,
                         Index epoch, Rng& mask_rng, Rng& dropout_rng);

/// Stacked clip features with masking applied, plus the matching targets.
struct Batch {
    MatrixF clips;
    std::vector<ClipTarget> targets;
};

Batch assemble_batch(std::span<const ClipSample> samples, const EpochContext& ctx, Rng& mask_rng);

struct TrainOptions {
    RmsNetConfig model;
    TrainPlan plan;
    MaskPolicy mask;
    bool masking = true;
    bool center_clips_only = false;
    bool drop_halftime_substitutions = true;
    double halftime_window_s = 120.0;
    bool fixed_center = false; // validate with offset 0.5
    EvalOptions eval;
    std::uint64_t seed = 0;
};

struct TrainResult {
    RmsNetParams<float> best;
    Index best_epoch = 0;
    bool stopped_early = false;
    std::vector<EpochMetrics> history;
};

TrainResult fit(std::span<const MatchRecord> train, std::span<const MatchRecord> val,
                const TrainOptions& options,
                const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Foreground clips drawn per epoch: the requested count capped at the pool
/// size, rounded down to a multiple of the class count.
Index effective_fg_per_epoch(const ClipPools& pools, const TrainPlan& plan, Index num_classes);

} // namespace rmsnet
