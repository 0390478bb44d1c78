#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rmsnet/binary_io.hpp"
#include "rmsnet/checkpoint.hpp"
#include "rmsnet/data.hpp"
#include "rmsnet/rng.hpp"
#include "rmsnet/spot.hpp"
#include "rmsnet/synth.hpp"

using namespace rmsnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an rmsnet::Error");
    return ErrorKind::Usage;
}

void truncate_file(const fs::path& p, std::uintmax_t keep) { fs::resize_file(p, keep); }

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST_CASE("match files round-trip bit for bit") {
    TempDir dir("rmsnet_io_match");
    SynthSpec spec;
    spec.num_matches = 2;
    spec.feature_dim = 16;
    spec.mean_event_gap_s = 60;
    Rng rng(1);
    for (const auto& m : synth_generate(spec, rng)) {
        save_match(m, dir.path / (m.id + ".rmsf"), dir.path / (m.id + ".json"));
        const auto back = load_match(dir.path / (m.id + ".rmsf"), dir.path / (m.id + ".json"));
        CHECK(back.id == m.id);
        CHECK(back.features == m.features);
        CHECK(back.events == m.events);
        CHECK(back.second_half_start == m.second_half_start);
        CHECK(back.feature_rate == m.feature_rate);
    }
    const auto split = load_split(dir.path);
    REQUIRE(split.size() == 2);
    CHECK(split[0].id == "match_000");
}

TEST_CASE("feature file errors are format errors") {
    TempDir dir("rmsnet_io_bad");
    const auto f = dir.path / "x.rmsf";
    save_features(MatrixF::Ones(10, 4), f);
    truncate_file(f, 40);
    CHECK(kind_of([&] { load_features(f); }) == ErrorKind::Format);

    write_text(f, "NOPE\x01\0\0\0");
    CHECK(kind_of([&] { load_features(f); }) == ErrorKind::Format);

    {
        std::ofstream os(f, std::ios::binary);
        os.write("RMSF", 4);
        io::write_u32(os, 7);
    }
    CHECK(kind_of([&] { load_features(f); }) == ErrorKind::Format);
    CHECK(kind_of([&] { load_features(dir.path / "missing.rmsf"); }) == ErrorKind::Io);
}

TEST_CASE("label file: game time maps to frames, inconsistencies are rejected") {
    TempDir dir("rmsnet_io_labels");
    save_features(MatrixF::Zero(4000, 2), dir.path / "g.rmsf");
    write_text(dir.path / "g.json", R"({"matchId": "g", "featureRate": 2,
        "annotations": [{"gameTime": "2 - 00:30", "label": "card"},
                        {"gameTime": "1 - 12:34", "label": "goal"}]})");
    const auto m = load_match(dir.path / "g.rmsf", dir.path / "g.json");
    REQUIRE(m.events.size() == 2);
    CHECK(m.events[0] == Event{1508, 0, 1}); // sorted on load
    CHECK(m.second_half_start == 2000);
    CHECK(m.events[1] == Event{2060, 1, 2});

    write_text(dir.path / "g.json", R"({"matchId": "g", "secondHalfStartFrame": 3000,
        "annotations": [{"gameTime": "2 - 09:00", "label": "goal"}]})");
    CHECK(kind_of([&] { load_match(dir.path / "g.rmsf", dir.path / "g.json"); }) ==
          ErrorKind::Consistency);

    write_text(dir.path / "g.json", R"({"matchId": "g", "annotations": [{"gameTime": "3 - 00:00", "label": "goal"}]})");
    CHECK(kind_of([&] { load_match(dir.path / "g.rmsf", dir.path / "g.json"); }) ==
          ErrorKind::Parse);

    write_text(dir.path / "g.json", R"({"matchId": "g", "annotations": [)");
    CHECK(kind_of([&] { load_match(dir.path / "g.rmsf", dir.path / "g.json"); }) ==
          ErrorKind::Format);

    write_text(dir.path / "g.json", R"({"matchId": "g", "numFrames": 10, "annotations": []})");
    CHECK(kind_of([&] { load_match(dir.path / "g.rmsf", dir.path / "g.json"); }) ==
          ErrorKind::Consistency);
}

TEST_CASE("raw feature import") {
    TempDir dir("rmsnet_io_raw");
    const auto f = dir.path / "raw.bin";
    MatrixF m(3, 2);
    m << 1, 2, 3, 4, 5, 6;
    {
        std::ofstream os(f, std::ios::binary);
        io::write_u32(os, 3);
        io::write_u32(os, 2);
        io::write_floats(os, m.data(), 6);
    }
    CHECK(import_raw_features(f) == m);
    {
        std::ofstream os(f, std::ios::binary | std::ios::app);
        os.put('x');
    }
    CHECK(kind_of([&] { import_raw_features(f); }) == ErrorKind::Format);
}

TEST_CASE("checkpoint round-trip and corruption") {
    TempDir dir("rmsnet_io_ckpt");
    RmsNetConfig c;
    c.feature_dim = 20;
    c.lambda = 3.5;
    c.fc2_activation = false;
    Rng rng(4);
    const auto p = init_params<float>(c, rng);
    const auto f = dir.path / "a.rmsn";
    save_checkpoint(c, p, f);
    const auto ck = load_checkpoint(f);
    CHECK(ck.config.feature_dim == 20);
    CHECK(ck.config.lambda == 3.5);
    CHECK_FALSE(ck.config.fc2_activation);
    CHECK(ck.config.activations);
    std::vector<const MatrixF*> orig;
    p.for_each([&](std::string_view, const MatrixF& m) { orig.push_back(&m); });
    std::size_t i = 0;
    ck.params.for_each([&](std::string_view, const MatrixF& m) { CHECK(m == *orig[i++]); });

    truncate_file(f, fs::file_size(f) - 10);
    CHECK(kind_of([&] { load_checkpoint(f); }) == ErrorKind::Format);
    CHECK(kind_of([&] { load_checkpoint(dir.path / "none.rmsn"); }) == ErrorKind::Io);
}

TEST_CASE("prediction files round-trip") {
    TempDir dir("rmsnet_io_pred");
    std::vector<SpotPrediction> p(2);
    p[0] = {"b", 40, 40.25, 20.0, 1, 2, 0.75};
    p[1] = {"a", 10, 9.5, 5.0, 1, 0, 0.5};
    save_predictions(p, dir.path / "p.json");
    const auto back = load_predictions(dir.path / "p.json");
    REQUIRE(back.size() == 2);
    CHECK(back[0].match_id == "a"); // sorted by match then frame
    CHECK(back[1].cls == 2);
    CHECK(back[1].confidence == 0.75);
    CHECK(back[1].position == 40.25);
    write_text(dir.path / "p.json", R"({"predictions": [{"matchId": "a"}]})");
    CHECK(kind_of([&] { load_predictions(dir.path / "p.json"); }) == ErrorKind::Format);
}
