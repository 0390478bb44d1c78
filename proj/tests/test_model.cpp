#include <doctest.h>

#include "oracles.hpp"
#include "rmsnet/gradcheck_suite.hpp"
#include "rmsnet/model.hpp"

using namespace rmsnet;

namespace {

RmsNetConfig small_config() {
    RmsNetConfig c;
    c.feature_dim = 6;
    c.clip_len = 7;
    c.fc1_dim = 5;
    c.conv1_dim = 4;
    c.conv2_dim = 4;
    c.fc2_dim = 3;
    c.kernel_size = 3;
    return c;
}

ModelOutput<double> head(const MatrixD& logits, const Vector<double>& raw) {
    ModelOutput<double> o;
    o.logits = logits;
    o.raw_offset = raw;
    o.probabilities = softmax_rows(logits);
    o.predicted_offset = raw.unaryExpr([](double v) { return sigmoid(v); });
    return o;
}

} // namespace

TEST_CASE("config validation") {
    RmsNetConfig c;
    CHECK_NOTHROW(c.validate());
    c.kernel_size = 8;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.lambda = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.fc2_dim = 0;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("parameter shapes follow the layer table") {
    const RmsNetConfig c;
    const auto p = RmsNetParams<float>::zeros(c);
    CHECK(p.fc1_w.rows() == 512);
    CHECK(p.fc1_w.cols() == 256);
    CHECK(p.conv1_w.rows() == 9 * 256);
    CHECK(p.conv1_w.cols() == 256);
    CHECK(p.conv2_w.rows() == 9 * 256);
    CHECK(p.conv2_w.cols() == 128);
    CHECK(p.fc2_w.rows() == 128);
    CHECK(p.fc2_w.cols() == 64);
    CHECK(p.cls_w.cols() == 4);
    CHECK(p.regr_w.cols() == 1);
    const Index expected = (512 * 256 + 256) + (9 * 256 * 256 + 256) + (9 * 256 * 128 + 128) +
                           (128 * 64 + 64) + (64 * 4 + 4) + (64 * 1 + 1);
    CHECK(p.parameter_count() == expected);

    std::vector<std::string_view> names;
    p.for_each([&](std::string_view n, const MatrixF&) { names.push_back(n); });
    CHECK(names == std::vector<std::string_view>(kParamNames.begin(), kParamNames.end()));
}

TEST_CASE("init_params: bounds, zero biases, determinism") {
    const RmsNetConfig c;
    Rng a(42), b(42);
    const auto p = init_params<float>(c, a);
    const auto q = init_params<float>(c, b);
    bool identical = true;
    std::vector<const MatrixF*> qs;
    q.for_each([&](std::string_view, const MatrixF& m) { qs.push_back(&m); });
    std::size_t i = 0;
    p.for_each([&](std::string_view name, const MatrixF& m) {
        identical = identical && m == *qs[i++];
        if (name.ends_with(".bias")) {
            CHECK(m.isZero(0.0));
        } else {
            const double bound = std::sqrt(1.0 / static_cast<double>(m.rows()));
            CHECK(m.cwiseAbs().maxCoeff() <= bound);
            CHECK(m.cwiseAbs().maxCoeff() > 0.9 * bound); // actually spans the range
        }
    });
    CHECK(identical);
    CHECK(p.fc1_w.cwiseAbs().maxCoeff() <= std::sqrt(1.0 / 512.0));
}

TEST_CASE("forward: output shapes and determinism without training") {
    const RmsNetConfig c;
    Rng r(1);
    const auto p = init_params<float>(c, r);
    std::mt19937_64 g(2);
    const MatrixF clips = oracle::random_matrix(2 * 41, 512, g).cast<float>();
    GradTape<float> tape;
    const auto out = forward(p, c, clips, false, r, &tape);
    CHECK(out.logits.rows() == 2);
    CHECK(out.logits.cols() == 4);
    CHECK(out.raw_offset.size() == 2);
    CHECK(tape.fc1_out.cols() == 256);
    CHECK(tape.conv1_out.cols() == 256);
    CHECK(tape.conv2_out.cols() == 128);
    CHECK(tape.conv2_out.rows() == 82);
    CHECK(tape.pooled.values.cols() == 128);
    CHECK(tape.fc2_out.cols() == 64);
    for (Index b = 0; b < 2; ++b) {
        CHECK(std::abs(out.probabilities.row(b).sum() - 1.0f) < 1e-6f);
        CHECK(out.predicted_offset(b) > 0.0f);
        CHECK(out.predicted_offset(b) < 1.0f);
    }
    Rng r1(5), r2(6);
    const auto again = forward(p, c, clips, false, r1);
    const auto third = forward(p, c, clips, false, r2);
    CHECK(again.logits == out.logits);
    CHECK(third.logits == out.logits); // no randomness consumed at inference
}

TEST_CASE("forward: clips in a batch are independent") {
    const RmsNetConfig c = small_config();
    Rng r(3);
    const auto p = init_params<double>(c, r);
    std::mt19937_64 g(4);
    const MatrixD clips = oracle::random_matrix(3 * c.clip_len, c.feature_dim, g);
    const auto all = forward(p, c, clips, false, r);
    for (Index b = 0; b < 3; ++b) {
        const MatrixD one = clips.middleRows(b * c.clip_len, c.clip_len);
        const auto single = forward(p, c, one, false, r);
        CHECK((single.logits.row(0) - all.logits.row(b)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("forward: zero clip with zero biases gives uniform probabilities") {
    const RmsNetConfig c;
    Rng r(7);
    const auto p = init_params<float>(c, r);
    const auto out = forward(p, c, MatrixF(MatrixF::Zero(41, 512)), false, r);
    for (Index k = 0; k < 4; ++k) CHECK(out.probabilities(0, k) == doctest::Approx(0.25));
    CHECK(out.predicted_offset(0) == 0.5f);
}

TEST_CASE("forward: wrong clip shape is a dimension error") {
    const RmsNetConfig c = small_config();
    Rng r(1);
    const auto p = init_params<double>(c, r);
    CHECK_THROWS_AS(forward(p, c, MatrixD(MatrixD::Zero(c.clip_len + 1, c.feature_dim)), false, r), Error);
    CHECK_THROWS_AS(forward(p, c, MatrixD(MatrixD::Zero(c.clip_len, c.feature_dim + 1)), false, r), Error);
}

TEST_CASE("classification and regression losses") {
    Vector<double> uniform = Vector<double>::Constant(4, 0.25);
    CHECK(classification_loss(uniform, 2) == doctest::Approx(std::log(4.0)));
    Vector<double> onehot = Vector<double>::Zero(4);
    onehot(1) = 1.0;
    CHECK(classification_loss(onehot, 1) == 0.0);
    Vector<double> p(4);
    p << 0.7, 0.1, 0.1, 0.1;
    CHECK(classification_loss(p, 0) == doctest::Approx(0.35667494393873245));
    CHECK_THROWS_AS(classification_loss(p, 4), Error);
    CHECK_THROWS_AS(classification_loss(p, -1), Error);

    CHECK(regression_loss(0.0, 0.5) == 0.0);
    CHECK(regression_loss(std::log(3.0), 0.25) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(regression_loss(50.0, 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(regression_loss(0.0, 1.5), Error);
    CHECK_THROWS_AS(regression_loss(0.0, -0.1), Error);
}

TEST_CASE("total_loss: weighted sum, background and lambda = 0") {
    // one foreground clip with L_cls = ln 4 and sigmoid(o) = 0.75, target 0.55 -> L_regr = 0.04
    MatrixD logits = MatrixD::Zero(1, 4);
    Vector<double> raw(1);
    raw << std::log(3.0);
    const std::vector<ClipTarget> fg{{0, 0.55}};
    const auto r = total_loss(head(logits, raw), std::span(fg), 10.0);
    CHECK(r.total == doctest::Approx(std::log(4.0) + 10.0 * 0.04));
    CHECK(r.regr == doctest::Approx(0.04));
    const auto r0 = total_loss(head(logits, raw), std::span(fg), 0.0);
    CHECK(r0.total == doctest::Approx(r0.cls));

    // background: the raw offset has no influence
    const std::vector<ClipTarget> bg{{3, std::nullopt}};
    Vector<double> other(1);
    other << -7.0;
    const auto b1 = total_loss(head(logits, raw), std::span(bg), 10.0);
    const auto b2 = total_loss(head(logits, other), std::span(bg), 10.0);
    CHECK(b1.total == b2.total);
    CHECK(b1.grad_offset(0) == 0.0);

    // foreground without offset, or background with one, is rejected
    const std::vector<ClipTarget> bad_fg{{0, std::nullopt}};
    CHECK_THROWS_AS(total_loss(head(logits, raw), std::span(bad_fg), 10.0), Error);
    const std::vector<ClipTarget> bad_label{{5, std::nullopt}};
    CHECK_THROWS_AS(total_loss(head(logits, raw), std::span(bad_label), 10.0), Error);
}

TEST_CASE("total_loss is invariant to shifting all logits") {
    std::mt19937_64 g(9);
    const MatrixD logits = oracle::random_matrix(3, 4, g);
    Vector<double> raw(3);
    raw << 0.1, -0.4, 2.0;
    const std::vector<ClipTarget> t{{0, 0.2}, {3, std::nullopt}, {2, 0.9}};
    const auto a = total_loss(head(logits, raw), std::span(t), 10.0);
    const auto b = total_loss(head((logits.array() + 123.0).matrix(), raw), std::span(t), 10.0);
    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
}

TEST_CASE("background clips give exactly zero regression-head gradient") {
    const RmsNetConfig c = small_config();
    Rng r(11);
    auto p = init_params<double>(c, r);
    std::mt19937_64 g(12);
    const MatrixD clips = oracle::random_matrix(2 * c.clip_len, c.feature_dim, g);
    const std::vector<ClipTarget> t{{c.num_classes, std::nullopt}, {c.num_classes, std::nullopt}};
    const auto lg = loss_and_grads(p, c, clips, std::span(t), true, r);
    CHECK(lg.grads.regr_w.isZero(0.0));
    CHECK(lg.grads.regr_b.isZero(0.0));
}

TEST_CASE("gradient shapes match parameter shapes") {
    const RmsNetConfig c = small_config();
    Rng r(13);
    const auto p = init_params<float>(c, r);
    const std::vector<ClipTarget> t{{1, 0.5}};
    const auto lg = loss_and_grads(p, c, MatrixF(MatrixF::Ones(c.clip_len, c.feature_dim)), std::span(t),
                                   true, r);
    CHECK(p.same_shapes(lg.grads));
}

TEST_CASE("full model gradient: 64-bit and 32-bit finite-difference checks") {
    GradCheckSuiteOptions o;
    o.seed = 3;
    const auto d = check_model(o, Precision::Double);
    CHECK(d.entries.size() == kParamNames.size());
    for (const auto& e : d.entries) {
        INFO(e.name);
        CHECK(e.passed);
        CHECK(e.max_rel_error < 1e-5);
    }
    const auto s = check_model(o, Precision::Single);
    CHECK(s.passed());
    CHECK(s.max_error() < 1e-3);
}

TEST_CASE("model gradient check also holds for the no-activation reading") {
    GradCheckSuiteOptions o;
    o.model = small_config();
    o.model.activations = false;
    CHECK(check_model(o, Precision::Double).passed());
}

TEST_CASE("injected gradient fault is detected") {
    GradCheckSuiteOptions o;
    o.model = small_config();
    o.inject_fault = true;
    const auto report = check_model(o, Precision::Double);
    CHECK_FALSE(report.passed());
    for (const auto& e : report.entries) CHECK(e.passed == (e.name != "conv1.weight"));
}
