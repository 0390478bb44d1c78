#include "rmsnet/gradcheck_suite.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "rmsnet/rng.hpp"

namespace rmsnet {

namespace {

MatrixD gaussian(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> normal;
    MatrixD m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

GradCheckOptions kernel_options(const GradCheckSuiteOptions& o, std::uint64_t salt) {
    GradCheckOptions g;
    g.epsilon = o.kernel_epsilon;
    g.tolerance = o.kernel_tolerance;
    g.directions = o.directions;
    g.coordinates = o.coordinates;
    g.seed = o.seed * 1000 + salt;
    return g;
}

// Pushes entries away from zero so relu stays differentiable under perturbation.
void clear_zero(MatrixD& m, double margin) {
    for (Index i = 0; i < m.size(); ++i) {
        double& v = m.data()[i];
        if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
    }
}

// Which side of every kink the forward pass sits on: ReLU input signs and the
// max-over-time winners. Finite differences are only meaningful between
// points that share it.
std::vector<Index> kink_pattern(const GradTape<double>& tape, const RmsNetConfig& config) {
    std::vector<Index> pattern;
    auto signs = [&](const MatrixD& m) {
        for (Index i = 0; i < m.size(); ++i) pattern.push_back(m.data()[i] > 0.0);
    };
    if (config.activations) {
        signs(tape.fc1_pre);
        signs(tape.conv1_pre);
        signs(tape.conv2_pre);
        if (config.fc2_activation) signs(tape.fc2_pre);
    }
    const MatrixD dropped = tape.dropout_mask.size() > 0
                                ? MatrixD(tape.conv2_out.cwiseProduct(tape.dropout_mask))
                                : tape.conv2_out;
    const auto pooled = max_over_time(dropped, config.clip_len);
    pattern.insert(pattern.end(), pooled.argmax.data(), pooled.argmax.data() + pooled.argmax.size());
    return pattern;
}

} // namespace

std::vector<GradCheckReport> check_kernels(const GradCheckSuiteOptions& options) {
    std::vector<GradCheckReport> reports;
    Rng rng = substream(options.seed, "gradcheck-kernels");

    { // linear
        MatrixD x = gaussian(5, 4, rng), w = gaussian(4, 8, rng), b = gaussian(1, 8, rng);
        const MatrixD proj = gaussian(5, 8, rng);
        auto loss = [&] { return linear(x, w, b).cwiseProduct(proj).sum(); };
        auto g = linear_backward(x, w, proj);
        std::vector<GradCheckTarget> t{{"linear.input", &x, g.input},
                                       {"linear.weight", &w, g.weight},
                                       {"linear.bias", &b, g.bias}};
        auto r = grad_check(loss, std::span(t), kernel_options(options, 1));
        r.label = "linear";
        reports.push_back(std::move(r));
    }
    { // conv1d_same, two sequences in one batch
        const Index k = 5, cin = 3, cout = 8, T = 7;
        MatrixD x = gaussian(2 * T, cin, rng), w = gaussian(k * cin, cout, rng),
                b = gaussian(1, cout, rng);
        const MatrixD proj = gaussian(2 * T, cout, rng);
        auto loss = [&] { return conv1d_same(x, w, b, k, T).cwiseProduct(proj).sum(); };
        auto g = conv1d_same_backward(im2col_same(x, k, T), cin, w, proj, k, T);
        std::vector<GradCheckTarget> t{{"conv1d.input", &x, g.input},
                                       {"conv1d.kernels", &w, g.kernels},
                                       {"conv1d.bias", &b, g.bias}};
        auto r = grad_check(loss, std::span(t), kernel_options(options, 2));
        r.label = "conv1d_same";
        reports.push_back(std::move(r));
    }
    { // relu
        MatrixD x = gaussian(6, 5, rng);
        clear_zero(x, 1e-2);
        const MatrixD proj = gaussian(6, 5, rng);
        auto loss = [&] { return relu(x).cwiseProduct(proj).sum(); };
        std::vector<GradCheckTarget> t{{"relu.input", &x, relu_backward(x, proj)}};
        auto r = grad_check(loss, std::span(t), kernel_options(options, 3));
        r.label = "relu";
        reports.push_back(std::move(r));
    }
    { // max_over_time: distinct values so the argmax is stable
        const Index T = 6;
        MatrixD x = gaussian(2 * T, 4, rng);
        for (Index i = 0; i < x.size(); ++i) x.data()[i] += 0.05 * static_cast<double>(i % 7);
        const MatrixD proj = gaussian(2, 4, rng);
        auto loss = [&] { return max_over_time(x, T).values.cwiseProduct(proj).sum(); };
        const auto fwd = max_over_time(x, T);
        std::vector<GradCheckTarget> t{
            {"max_over_time.input", &x, max_over_time_backward(fwd, x.rows(), proj)}};
        auto r = grad_check(loss, std::span(t), kernel_options(options, 4));
        r.label = "max_over_time";
        reports.push_back(std::move(r));
    }
    { // dropout with a fixed mask
        MatrixD x = gaussian(6, 5, rng);
        const MatrixD proj = gaussian(6, 5, rng);
        Rng mask_rng(options.seed);
        const MatrixD mask = dropout_mask<double>(6, 5, 0.3, mask_rng);
        auto loss = [&] { return x.cwiseProduct(mask).cwiseProduct(proj).sum(); };
        std::vector<GradCheckTarget> t{{"dropout.input", &x, proj.cwiseProduct(mask)}};
        auto r = grad_check(loss, std::span(t), kernel_options(options, 5));
        r.label = "dropout";
        reports.push_back(std::move(r));
    }
    { // softmax cross-entropy + lambda * squared sigmoid error
        const Index C = 3;
        MatrixD logits = gaussian(8, C + 1, rng);
        MatrixD offsets = gaussian(8, 1, rng);
        const std::vector<ClipTarget> targets{{0, 0.25}, {2, 0.9},  {C, std::nullopt}, {1, 0.0},
                                              {1, 1.0},  {0, 0.6},  {C, std::nullopt}, {2, 0.4}};
        auto output = [&] {
            ModelOutput<double> o;
            o.logits = logits;
            o.raw_offset = offsets.col(0);
            o.probabilities = softmax_rows(logits);
            o.predicted_offset = o.raw_offset.unaryExpr([](double v) { return sigmoid(v); });
            return o;
        };
        auto loss = [&] { return total_loss(output(), std::span(targets), 10.0).total; };
        const auto r0 = total_loss(output(), std::span(targets), 10.0);
        std::vector<GradCheckTarget> t{{"loss.logits", &logits, r0.grad_logits},
                                       {"loss.raw_offset", &offsets, MatrixD(r0.grad_offset)}};
        auto r = grad_check(loss, std::span(t), kernel_options(options, 6));
        r.label = "loss_head";
        reports.push_back(std::move(r));
    }
    return reports;
}

namespace {

GradCheckReport check_model_at(const GradCheckSuiteOptions& options, Precision precision,
                               int attempt) {
    const RmsNetConfig& config = options.model;
    const Index L = config.clip_len;
    const Index C = config.num_classes;
    const std::vector<ClipTarget> targets{{0, 0.3}, {C - 1, 17.0 / 41.0}, {C, std::nullopt}};
    const auto batch = static_cast<Index>(targets.size());
    const std::uint64_t dropout_seed = options.seed + 99;

    Rng init_rng = substream(options.seed, "gradcheck-init");
    const auto params_f = init_params<float>(config, init_rng);
    // biases start at zero; give them values so their gradients are exercised
    RmsNetParams<double> params = params_f.cast<double>();
    Rng data_rng = substream(options.seed, "gradcheck-data");
    params.for_each([&](std::string_view name, MatrixD& m) {
        if (name.ends_with(".bias")) m = 0.1 * gaussian(m.rows(), m.cols(), data_rng);
    });
    if (precision == Precision::Single) params = params.cast<float>().cast<double>();

    Rng clip_rng = attempt == 0 ? Rng(data_rng)
                                : substream(options.seed, "gradcheck-data-" + std::to_string(attempt));
    MatrixD clips = gaussian(batch * L, config.feature_dim, clip_rng);
    if (precision == Precision::Single) clips = clips.cast<float>().cast<double>();

    auto evaluate = [&](GradTape<double>& tape) {
        Rng drop(dropout_seed);
        const auto out = forward(params, config, clips, true, drop, &tape);
        return total_loss(out, std::span(targets), config.lambda).total;
    };
    GradTape<double> base_tape;
    evaluate(base_tape);
    const std::vector<Index> base_pattern = kink_pattern(base_tape, config);

    // analytic gradient in the requested precision
    RmsNetParams<double> analytic;
    if (precision == Precision::Double) {
        Rng drop(dropout_seed);
        analytic = loss_and_grads(params, config, clips, std::span(targets), true, drop).grads;
    } else {
        Rng drop(dropout_seed);
        const auto pf = params.cast<float>();
        const MatrixF cf = clips.cast<float>();
        analytic = loss_and_grads(pf, config, cf, std::span(targets), true, drop).grads.cast<double>();
    }
    if (options.inject_fault) analytic.conv1_w *= 1.1;

    std::vector<GradCheckTarget> t;
    std::vector<const MatrixD*> grads;
    analytic.for_each([&](std::string_view, const MatrixD& g) { grads.push_back(&g); });
    std::size_t i = 0;
    params.for_each([&](std::string_view name, MatrixD& m) {
        t.push_back({std::string(name), &m, *grads[i++]});
    });

    auto loss = [&]() -> std::optional<double> {
        GradTape<double> tape;
        const double value = evaluate(tape);
        if (kink_pattern(tape, config) != base_pattern) return std::nullopt;
        return value;
    };
    GradCheckOptions go;
    go.epsilon = options.model_epsilon;
    go.tolerance = precision == Precision::Double ? options.model_tolerance_double
                                                  : options.model_tolerance_single;
    go.directions = options.directions;
    go.coordinates = options.coordinates;
    go.seed = options.seed;
    go.fourth_order = true;
    auto report = grad_check(loss, std::span(t), go);
    report.label = precision == Precision::Double ? "model (64-bit)" : "model (32-bit)";
    return report;
}

} // namespace

GradCheckReport check_model(const GradCheckSuiteOptions& options, Precision precision) {
    options.model.validate();
    // A random input occasionally lands within epsilon of a ReLU or max-over-time
    // tie, so every probe of some tensor crosses it; draw a fresh input then.
    GradCheckReport report;
    for (int attempt = 0; attempt < 4; ++attempt) {
        report = check_model_at(options, precision, attempt);
        const bool starved = std::any_of(report.entries.begin(), report.entries.end(),
                                         [](const GradCheckEntry& e) { return e.probes == 0; });
        if (!starved) break;
    }
    return report;
}

} // namespace rmsnet
