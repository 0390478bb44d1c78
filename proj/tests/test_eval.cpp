#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "metric_oracle.hpp"
#include "rmsnet/eval.hpp"

using namespace rmsnet;

namespace {

SpotPrediction pred(const std::string& id, double seconds, Index cls, double conf) {
    SpotPrediction p;
    p.match_id = id;
    p.seconds = seconds;
    p.frame = static_cast<Index>(seconds * 2);
    p.cls = cls;
    p.confidence = conf;
    return p;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

} // namespace

TEST_CASE("closed-form case: one spot 7 s late") {
    const std::vector<GroundTruthSpot> gt{{"m", 100.0, 0}};
    const std::vector<SpotPrediction> p{pred("m", 107.0, 0, 0.9)};
    EvalOptions o;
    o.num_classes = 1;
    const auto r = average_map(p, gt, o);
    CHECK(r.map.front() == 0.0);
    for (std::size_t k = 1; k < r.map.size(); ++k) CHECK(r.map[k] == 1.0);
    CHECK(std::abs(r.average_map - 52.5 / 55.0) < 1e-12);
    CHECK(std::abs(r.average_map - 0.9545) < 1e-4);
}

TEST_CASE("perfect and empty predictions") {
    const std::vector<GroundTruthSpot> gt{{"a", 10, 0}, {"a", 200, 1}, {"b", 50, 2}};
    std::vector<SpotPrediction> p;
    for (const auto& g : gt) p.push_back(pred(g.match_id, g.seconds, g.cls, 1.0));
    CHECK(average_map(p, gt).average_map == 1.0);
    CHECK(average_map({}, gt).average_map == 0.0);
    CHECK(average_map(p, {}).average_map == 0.0);
}

TEST_CASE("AP by hand: ranking matters") {
    // two spots; ranks: TP (1/1), FP, TP (2/3) -> AP = (1 + 2/3) / 2
    const std::vector<GroundTruthSpot> gt{{"m", 10, 0}, {"m", 100, 0}};
    const std::vector<SpotPrediction> p{pred("m", 11, 0, 0.9), pred("m", 300, 0, 0.8),
                                        pred("m", 98, 0, 0.7)};
    CHECK(ap_at_delta(p, gt, 5.0, 0) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    // interpolation: FP first, then two TPs -> precisions 1/2, 2/3 -> both lifted to 2/3
    const std::vector<SpotPrediction> q{pred("m", 300, 0, 0.9), pred("m", 11, 0, 0.8),
                                        pred("m", 98, 0, 0.7)};
    CHECK(ap_at_delta(q, gt, 5.0, 0) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("matching: one-to-one consumes spots, many-to-one does not") {
    const std::vector<GroundTruthSpot> gt{{"m", 10, 0}};
    const std::vector<SpotPrediction> p{pred("m", 10, 0, 0.9), pred("m", 11, 0, 0.8)};
    CHECK(ap_at_delta(p, gt, 5.0, 0, MatchingPolicy::OneToOne) == 1.0);
    CHECK(ap_at_delta(p, gt, 5.0, 0, MatchingPolicy::ManyToOne) == 1.0);
    // the duplicate is a false positive ahead of the second spot under one-to-one
    const std::vector<GroundTruthSpot> gt2{{"m", 10, 0}, {"m", 60, 0}};
    const std::vector<SpotPrediction> p2{pred("m", 10, 0, 0.9), pred("m", 11, 0, 0.8),
                                         pred("m", 60, 0, 0.7)};
    CHECK(ap_at_delta(p2, gt2, 5.0, 0, MatchingPolicy::OneToOne) ==
          doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(ap_at_delta(p2, gt2, 5.0, 0, MatchingPolicy::ManyToOne) ==
          doctest::Approx((1.0 + 1.0) / 2.0));
    CHECK(matching_policy_from_string("many-to-one") == MatchingPolicy::ManyToOne);
    CHECK_THROWS_AS(matching_policy_from_string("bipartite"), Error);
}

TEST_CASE("tolerance boundary is inclusive and spots never match across matches") {
    const std::vector<GroundTruthSpot> gt{{"a", 10, 0}};
    CHECK(ap_at_delta(std::vector{pred("a", 15, 0, 1)}, gt, 5.0, 0) == 1.0);
    CHECK(ap_at_delta(std::vector{pred("a", 15.5, 0, 1)}, gt, 5.0, 0) == 0.0);
    CHECK(ap_at_delta(std::vector{pred("b", 10, 0, 1)}, gt, 5.0, 0) == 0.0);
    CHECK(ap_at_delta(std::vector{pred("a", 10, 1, 1)}, gt, 5.0, 0) == 0.0);
}

TEST_CASE("mAP averages only classes with ground truth") {
    const std::vector<GroundTruthSpot> gt{{"m", 10, 0}};
    const std::vector<SpotPrediction> p{pred("m", 10, 0, 1), pred("m", 90, 2, 1)};
    CHECK(map_at_delta(p, gt, 5.0, 3) == 1.0);
}

TEST_CASE("AP is monotone in the tolerance") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = oracle::random_instance(rng);
        for (Index c = 0; c < inst.classes; ++c) {
            double prev = 0.0;
            for (double d : default_delta_grid()) {
                // many-to-one is monotone by construction; one-to-one greedy need not be
                const double ap = ap_at_delta(inst.preds, inst.gt, d, c, MatchingPolicy::ManyToOne);
                CHECK(ap >= prev);
                CHECK(ap <= 1.0);
                prev = ap;
            }
        }
    }
}

TEST_CASE("average_map equals the brute-force oracle bit for bit") {
    std::mt19937_64 rng(2024);
    const auto deltas = default_delta_grid();
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = oracle::random_instance(rng);
        EvalOptions o;
        o.num_classes = inst.classes;
        const double got = average_map(inst.preds, inst.gt, o).average_map;
        const double want = oracle::brute_average_map(inst.preds, inst.gt, deltas, inst.classes);
        CHECK(bit_equal(got, want));
    }
}

TEST_CASE("delta grid parsing and trapezoid") {
    CHECK(parse_delta_grid("5:60:5") == default_delta_grid());
    CHECK(parse_delta_grid("1:2:0.5") == std::vector<double>{1.0, 1.5, 2.0});
    CHECK_THROWS_AS(parse_delta_grid("5-60"), Error);
    CHECK_THROWS_AS(parse_delta_grid("5:60:0"), Error);
    CHECK_THROWS_AS(parse_delta_grid("5:60:5x"), Error);
    const std::vector<double> x{0, 1, 3}, y{0, 1, 1};
    CHECK(trapezoid_mean(x, y) == doctest::Approx(2.5 / 3.0));
}

TEST_CASE("curve files round-trip") {
    const std::vector<GroundTruthSpot> gt{{"m", 100, 0}, {"m", 300, 1}};
    const std::vector<SpotPrediction> p{pred("m", 107, 0, 0.9), pred("m", 320, 1, 0.4)};
    const auto r = average_map(p, gt);
    const auto dir = std::filesystem::temp_directory_path() / "rmsnet_curves_test";
    std::filesystem::remove_all(dir);
    export_curves(r, dir);
    const auto back = read_curves(dir);
    CHECK(back.deltas == r.deltas);
    CHECK(back.map == r.map);
    CHECK(back.per_class_ap == r.per_class_ap);
    CHECK(back.average_map == r.average_map);
    CHECK(std::filesystem::exists(dir / "summary.json"));
    std::filesystem::remove_all(dir);
}
