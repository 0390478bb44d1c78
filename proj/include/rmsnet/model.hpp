#pragma once

// The spotting head: FC1 -> Conv1 -> Conv2 -> Dropout -> max over time -> FC2,
// followed by sibling classification (C+1 logits, last one is background) and
// offset regression (one raw scalar, squashed by a sigmoid) layers.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rmsnet/kernels.hpp"

namespace rmsnet {

struct RmsNetConfig {
    Index feature_dim = 512;
    Index clip_len = 41;
    Index fc1_dim = 256;
    Index conv1_dim = 256;
    Index conv2_dim = 128;
    Index fc2_dim = 64;
    Index num_classes = 3; // event classes; background is an extra output
    Index kernel_size = 9;
    double dropout = 0.1;
    double lambda = 10.0;
    bool activations = true;    // ReLU after FC1, Conv1, Conv2
    bool fc2_activation = true; // ReLU after FC2 (only when `activations`)

    Index num_outputs() const { return num_classes + 1; }
    Index background() const { return num_classes; }

    void validate() const {
        for (Index d : {feature_dim, clip_len, fc1_dim, conv1_dim, conv2_dim, fc2_dim, num_classes})
            RMSNET_REQUIRE(d >= 1, Config, "model dimensions must be >= 1, got ", d);
        RMSNET_REQUIRE(kernel_size >= 1 && kernel_size % 2 == 1, Config,
                       "kernel size must be odd, got ", kernel_size);
        RMSNET_REQUIRE(lambda >= 0.0, Config, "lambda must be >= 0, got ", lambda);
        check_dropout_rate(dropout);
    }
};

inline constexpr std::array<std::string_view, 12> kParamNames = {
    "fc1.weight",   "fc1.bias",   "conv1.weight",  "conv1.bias",
    "conv2.weight", "conv2.bias", "fc2.weight",    "fc2.bias",
    "fc_cls.weight", "fc_cls.bias", "fc_regr.weight", "fc_regr.bias",
};

template <typename Scalar>
struct RmsNetParams {
    Matrix<Scalar> fc1_w, fc1_b;
    Matrix<Scalar> conv1_w, conv1_b;
    Matrix<Scalar> conv2_w, conv2_b;
    Matrix<Scalar> fc2_w, fc2_b;
    Matrix<Scalar> cls_w, cls_b;
    Matrix<Scalar> regr_w, regr_b;

    /// Visits (name, tensor) in the fixed layer order of kParamNames.
    template <typename Self, typename F>
    static void visit(Self& self, F&& fn) {
        fn(kParamNames[0], self.fc1_w);
        fn(kParamNames[1], self.fc1_b);
        fn(kParamNames[2], self.conv1_w);
        fn(kParamNames[3], self.conv1_b);
        fn(kParamNames[4], self.conv2_w);
        fn(kParamNames[5], self.conv2_b);
        fn(kParamNames[6], self.fc2_w);
        fn(kParamNames[7], self.fc2_b);
        fn(kParamNames[8], self.cls_w);
        fn(kParamNames[9], self.cls_b);
        fn(kParamNames[10], self.regr_w);
        fn(kParamNames[11], self.regr_b);
    }
    template <typename F> void for_each(F&& fn) { visit(*this, std::forward<F>(fn)); }
    template <typename F> void for_each(F&& fn) const { visit(*this, std::forward<F>(fn)); }

    static RmsNetParams zeros(const RmsNetConfig& c) {
        RmsNetParams p;
        p.fc1_w.setZero(c.feature_dim, c.fc1_dim);
        p.fc1_b.setZero(1, c.fc1_dim);
        p.conv1_w.setZero(c.kernel_size * c.fc1_dim, c.conv1_dim);
        p.conv1_b.setZero(1, c.conv1_dim);
        p.conv2_w.setZero(c.kernel_size * c.conv1_dim, c.conv2_dim);
        p.conv2_b.setZero(1, c.conv2_dim);
        p.fc2_w.setZero(c.conv2_dim, c.fc2_dim);
        p.fc2_b.setZero(1, c.fc2_dim);
        p.cls_w.setZero(c.fc2_dim, c.num_outputs());
        p.cls_b.setZero(1, c.num_outputs());
        p.regr_w.setZero(c.fc2_dim, 1);
        p.regr_b.setZero(1, 1);
        return p;
    }

    template <typename Other>
    RmsNetParams<Other> cast() const {
        std::vector<const Matrix<Scalar>*> src;
        for_each([&](std::string_view, const Matrix<Scalar>& m) { src.push_back(&m); });
        RmsNetParams<Other> out;
        std::size_t i = 0;
        out.for_each([&](std::string_view, Matrix<Other>& m) {
            m = src[i++]->template cast<Other>();
        });
        return out;
    }

    bool same_shapes(const RmsNetParams& other) const {
        bool same = true;
        std::vector<std::pair<Index, Index>> shapes;
        for_each([&](std::string_view, const Matrix<Scalar>& m) {
            shapes.emplace_back(m.rows(), m.cols());
        });
        std::size_t i = 0;
        other.for_each([&](std::string_view, const Matrix<Scalar>& m) {
            same = same && shapes[i].first == m.rows() && shapes[i].second == m.cols();
            ++i;
        });
        return same;
    }

    Index parameter_count() const {
        Index n = 0;
        for_each([&](std::string_view, const Matrix<Scalar>& m) { n += m.size(); });
        return n;
    }
};

/// Uniform in +-sqrt(1/fan_in) for weights, zero biases.
template <typename Scalar>
RmsNetParams<Scalar> init_params(const RmsNetConfig& config, Rng& rng) {
    config.validate();
    auto params = RmsNetParams<Scalar>::zeros(config);
    params.for_each([&](std::string_view name, Matrix<Scalar>& m) {
        if (name.ends_with(".bias")) return;
        const double bound = std::sqrt(1.0 / static_cast<double>(m.rows()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
    });
    return params;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Activations cached by `forward`, replayed in reverse by `backward`.
template <typename Scalar>
struct GradTape {
    Index batch = 0;
    Matrix<Scalar> input;
    Matrix<Scalar> fc1_pre, fc1_out;
    Matrix<Scalar> conv1_cols, conv1_pre, conv1_out;
    Matrix<Scalar> conv2_cols, conv2_pre, conv2_out;
    Matrix<Scalar> dropout_mask; // empty when dropout was not applied
    MaxOverTime<Scalar> pooled;
    Matrix<Scalar> fc2_pre, fc2_out;
};

/// One row per clip.
template <typename Scalar>
struct ModelOutput {
    Matrix<Scalar> logits;           // batch x (C+1)
    Vector<Scalar> raw_offset;       // batch
    Matrix<Scalar> probabilities;    // softmax of logits
    Vector<Scalar> predicted_offset; // sigmoid of raw_offset

    Index batch() const { return logits.rows(); }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> activate(const Matrix<Scalar>& pre, bool enabled) {
    return enabled ? relu(pre) : pre;
}

template <typename Scalar>
Matrix<Scalar> activate_backward(const Matrix<Scalar>& pre, const Matrix<Scalar>& grad,
                                 bool enabled) {
    return enabled ? relu_backward(pre, grad) : grad;
}

} // namespace detail

/// Runs a batch of clips stacked along rows (batch * clip_len rows).
template <typename Scalar>
ModelOutput<Scalar> forward(const RmsNetParams<Scalar>& params, const RmsNetConfig& config,
                            const Matrix<Scalar>& clips, bool training, Rng& rng,
                            GradTape<Scalar>* tape = nullptr) {
    const Index L = config.clip_len;
    RMSNET_REQUIRE(clips.cols() == config.feature_dim, Dimension, "clip has ", clips.cols(),
                   " feature channels, model expects ", config.feature_dim);
    RMSNET_REQUIRE(clips.rows() > 0 && clips.rows() % L == 0, Dimension, "clip batch has ",
                   clips.rows(), " rows, expected a positive multiple of clip length ", L);

    const bool act = config.activations;
    GradTape<Scalar> local;
    GradTape<Scalar>& t = tape ? *tape : local;
    t.batch = clips.rows() / L;
    if (tape) t.input = clips;

    t.fc1_pre = linear(clips, params.fc1_w, params.fc1_b);
    t.fc1_out = detail::activate(t.fc1_pre, act);

    t.conv1_cols = im2col_same(t.fc1_out, config.kernel_size, L);
    t.conv1_pre = linear(t.conv1_cols, params.conv1_w, params.conv1_b);
    t.conv1_out = detail::activate(t.conv1_pre, act);

    t.conv2_cols = im2col_same(t.conv1_out, config.kernel_size, L);
    t.conv2_pre = linear(t.conv2_cols, params.conv2_w, params.conv2_b);
    t.conv2_out = detail::activate(t.conv2_pre, act);

    const bool drop = training && config.dropout > 0.0;
    if (drop) {
        t.dropout_mask = dropout_mask<Scalar>(t.conv2_out.rows(), t.conv2_out.cols(),
                                              config.dropout, rng);
        t.pooled = max_over_time(t.conv2_out.cwiseProduct(t.dropout_mask), L);
    } else {
        t.dropout_mask.resize(0, 0);
        t.pooled = max_over_time(t.conv2_out, L);
    }

    t.fc2_pre = linear(t.pooled.values, params.fc2_w, params.fc2_b);
    t.fc2_out = detail::activate(t.fc2_pre, act && config.fc2_activation);

    ModelOutput<Scalar> out;
    out.logits = linear(t.fc2_out, params.cls_w, params.cls_b);
    out.raw_offset = linear(t.fc2_out, params.regr_w, params.regr_b).col(0);
    out.probabilities = softmax_rows(out.logits);
    out.predicted_offset = out.raw_offset.unaryExpr([](Scalar o) { return sigmoid(o); });
    return out;
}

// ---------------------------------------------------------------------------
// Losses

/// Cross-entropy of one probability vector against a class id in [0, C].
template <typename Derived>
typename Derived::Scalar classification_loss(const Eigen::MatrixBase<Derived>& probabilities,
                                             Index label) {
    RMSNET_REQUIRE(label >= 0 && label < probabilities.size(), Label, "label ", label,
                   " outside [0, ", probabilities.size() - 1, "]");
    return -std::log(probabilities(label));
}

/// Squared error between sigmoid(raw_offset) and a target offset in [0, 1].
template <typename Scalar>
Scalar regression_loss(Scalar raw_offset, double target) {
    RMSNET_REQUIRE(target >= 0.0 && target <= 1.0, Target, "offset target ", target,
                   " outside [0, 1]");
    const Scalar diff = sigmoid(raw_offset) - static_cast<Scalar>(target);
    return diff * diff;
}

/// Supervision for one clip: a class id (C = background) and, for
/// foreground clips, the normalized offset of the event inside the clip.
struct ClipTarget {
    Index label = 0;
    std::optional<double> offset;
};

template <typename Scalar>
struct LossResult {
    Scalar total = 0;      // batch mean of L_cls + lambda * L_regr
    Scalar cls = 0;        // batch mean of L_cls
    Scalar regr = 0;       // mean of L_regr over foreground clips
    Index foreground = 0;
    Index correct = 0;     // argmax == label
    double abs_offset_error = 0; // summed |sigmoid(o) - r| over foreground clips
    Matrix<Scalar> grad_logits;  // d total / d logits
    Vector<Scalar> grad_offset;  // d total / d raw_offset
};

/// Batch-mean loss with its gradient w.r.t. the head outputs. Background
/// clips contribute classification loss only.
template <typename Scalar>
LossResult<Scalar> total_loss(const ModelOutput<Scalar>& output,
                              std::span<const ClipTarget> targets, double lambda) {
    const Index batch = output.batch();
    RMSNET_REQUIRE(static_cast<Index>(targets.size()) == batch, Dimension, "got ",
                   targets.size(), " targets for a batch of ", batch);
    const Index background = output.logits.cols() - 1;
    const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);

    LossResult<Scalar> r;
    r.grad_logits = output.probabilities * inv_batch;
    r.grad_offset = Vector<Scalar>::Zero(batch);
    for (Index b = 0; b < batch; ++b) {
        const ClipTarget& target = targets[static_cast<std::size_t>(b)];
        RMSNET_REQUIRE(target.label >= 0 && target.label <= background, Label, "label ",
                       target.label, " outside [0, ", background, "]");
        RMSNET_REQUIRE(target.offset.has_value() == (target.label != background), Target,
                       "foreground clips need an offset target and background clips none");

        // log-softmax form keeps the loss finite when p_label underflows
        const auto row = output.logits.row(b);
        const Scalar shift = row.maxCoeff();
        const Scalar log_norm = std::log((row.array() - shift).exp().sum()) + shift;
        const Scalar cls = log_norm - row(target.label);
        r.cls += cls;
        r.total += cls;
        r.grad_logits(b, target.label) -= inv_batch;

        Index argmax = 0;
        row.maxCoeff(&argmax);
        if (argmax == target.label) ++r.correct;

        if (target.offset) {
            const Scalar s = output.predicted_offset(b);
            const Scalar regr = regression_loss(output.raw_offset(b), *target.offset);
            r.regr += regr;
            r.total += static_cast<Scalar>(lambda) * regr;
            r.grad_offset(b) = static_cast<Scalar>(lambda) * Scalar(2) *
                               (s - static_cast<Scalar>(*target.offset)) * s * (Scalar(1) - s) *
                               inv_batch;
            r.abs_offset_error += std::abs(static_cast<double>(s) - *target.offset);
            ++r.foreground;
        }
    }
    r.total *= inv_batch;
    r.cls *= inv_batch;
    if (r.foreground > 0) r.regr /= static_cast<Scalar>(r.foreground);
    return r;
}

// ---------------------------------------------------------------------------
// Backward pass

template <typename Scalar>
RmsNetParams<Scalar> backward(const RmsNetParams<Scalar>& params, const RmsNetConfig& config,
                              const GradTape<Scalar>& t, const Matrix<Scalar>& grad_logits,
                              const Vector<Scalar>& grad_offset) {
    const Index L = config.clip_len;
    const bool act = config.activations;
    RmsNetParams<Scalar> g;

    auto cls = linear_backward(t.fc2_out, params.cls_w, grad_logits);
    const Matrix<Scalar> grad_off = grad_offset;
    auto regr = linear_backward(t.fc2_out, params.regr_w, grad_off);
    g.cls_w = std::move(cls.weight);
    g.cls_b = std::move(cls.bias);
    g.regr_w = std::move(regr.weight);
    g.regr_b = std::move(regr.bias);

    Matrix<Scalar> grad = cls.input + regr.input;
    grad = detail::activate_backward(t.fc2_pre, grad, act && config.fc2_activation);
    auto fc2 = linear_backward(t.pooled.values, params.fc2_w, grad);
    g.fc2_w = std::move(fc2.weight);
    g.fc2_b = std::move(fc2.bias);

    grad = max_over_time_backward(t.pooled, t.conv2_out.rows(), fc2.input);
    if (t.dropout_mask.size() > 0) grad = grad.cwiseProduct(t.dropout_mask);
    grad = detail::activate_backward(t.conv2_pre, grad, act);
    auto conv2 = conv1d_same_backward(t.conv2_cols, config.conv1_dim, params.conv2_w, grad,
                                      config.kernel_size, L);
    g.conv2_w = std::move(conv2.kernels);
    g.conv2_b = std::move(conv2.bias);

    grad = detail::activate_backward(t.conv1_pre, conv2.input, act);
    auto conv1 = conv1d_same_backward(t.conv1_cols, config.fc1_dim, params.conv1_w, grad,
                                      config.kernel_size, L);
    g.conv1_w = std::move(conv1.kernels);
    g.conv1_b = std::move(conv1.bias);

    grad = detail::activate_backward(t.fc1_pre, conv1.input, act);
    // the clip features are not trainable, so only the weight/bias terms are needed
    g.fc1_w.noalias() = t.input.transpose() * grad;
    g.fc1_b = grad.colwise().sum();
    return g;
}

/// Loss and parameter gradients for one batch.
template <typename Scalar>
struct LossAndGrads {
    LossResult<Scalar> loss;
    RmsNetParams<Scalar> grads;
};

template <typename Scalar>
LossAndGrads<Scalar> loss_and_grads(const RmsNetParams<Scalar>& params,
                                    const RmsNetConfig& config, const Matrix<Scalar>& clips,
                                    std::span<const ClipTarget> targets, bool training,
                                    Rng& rng) {
    GradTape<Scalar> tape;
    const auto out = forward(params, config, clips, training, rng, &tape);
    LossAndGrads<Scalar> r;
    r.loss = total_loss(out, targets, config.lambda);
    r.grads = backward(params, config, tape, r.loss.grad_logits, r.loss.grad_offset);
    return r;
}

} // namespace rmsnet
