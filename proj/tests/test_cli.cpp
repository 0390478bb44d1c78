#include <doctest.h>

#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "rmsnet/cli.hpp"
#include "rmsnet/data.hpp"
#include "rmsnet/spot.hpp"

using namespace rmsnet;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "rmsnet");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

const std::vector<std::string> kSmallSynth{"--train-matches", "2", "--val-matches", "1",
                                           "--test-matches", "3", "--feature-dim", "8",
                                           "--mean-gap", "90"};

Result synth(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"synth", "--out", out};
    args.insert(args.end(), kSmallSynth.begin(), kSmallSynth.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
}

} // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"train", "--epochs", "many"}).code == 1);
    CHECK(run({"infer"}).code == 1); // --checkpoint is required
    CHECK(run({"--threads", "0", "gradcheck"}).code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("data errors exit with 2") {
    TempDir dir("rmsnet_cli_missing");
    const auto r = run({"infer", "--checkpoint", dir.str("none.rmsn"), "--split", dir.str()});
    CHECK(r.code == 2);
    CHECK(r.err.find("error") != std::string::npos);
    CHECK(run({"eval", "--predictions", dir.str("p.json"), "--split", dir.str("nope")}).code == 2);
}

TEST_CASE("synth writes three splits deterministically and guards its output") {
    TempDir a("rmsnet_cli_synth_a"), b("rmsnet_cli_synth_b");
    const auto r = synth(a.str(), {"--seed", "5"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("# seed = 5") != std::string::npos);
    CHECK(r.out.find("# resolved configuration") != std::string::npos);
    REQUIRE(synth(b.str(), {"--seed", "5"}).code == 0);

    CHECK(fs::exists(a.path / "manifest.json"));
    const std::vector<std::pair<std::string, std::size_t>> counts{
        {"train", 2}, {"val", 1}, {"test", 3}};
    for (const auto& [split, n] : counts) {
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(a.path / split)) {
            ++files;
            CHECK(slurp(e.path()) == slurp(b.path / split / e.path().filename()));
        }
        CHECK(files == 2 * n);
    }

    // a different seed gives different features
    TempDir c("rmsnet_cli_synth_c");
    REQUIRE(synth(c.str(), {"--seed", "6"}).code == 0);
    CHECK(slurp(a.path / "test" / "test_000.rmsf") != slurp(c.path / "test" / "test_000.rmsf"));

    CHECK(synth(a.str(), {"--seed", "5"}).code == 1);
    CHECK(synth(a.str(), {"--seed", "5", "--force"}).code == 0);
}

TEST_CASE("config files: unknown keys are rejected, flags win") {
    TempDir dir("rmsnet_cli_config");
    fs::create_directories(dir.path);
    const auto cfg = dir.path / "run.toml";

    std::ofstream(cfg) << "[synth]\nfeature-dim = 6\nnot-an-option = 3\n";
    CHECK(run({"--config", cfg.string(), "synth", "--out", dir.str("x")}).code == 1);

    std::ofstream(cfg) << "[synth]\nfeature-dim = 6\ntrain-matches = 1\nval-matches = 1\n"
                          "test-matches = 1\nseed = 9\n";
    const auto r = run({"--config", cfg.string(), "synth", "--out", dir.str("y"), "--seed", "11"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("# seed = 11") != std::string::npos);
    const auto m = load_split(dir.path / "y" / "test");
    REQUIRE(m.size() == 1);
    CHECK(m[0].features.cols() == 6);
}

TEST_CASE("eval scores a predictions file") {
    TempDir dir("rmsnet_cli_eval");
    REQUIRE(synth(dir.str("data")).code == 0);
    const auto matches = load_split(dir.path / "data" / "test");
    std::vector<SpotPrediction> perfect;
    for (const auto& m : matches)
        for (const auto& e : m.events)
            perfect.push_back({m.id, e.frame, static_cast<double>(e.frame),
                               static_cast<double>(e.frame) / m.feature_rate, e.half, e.cls, 0.9});
    REQUIRE(!perfect.empty());
    save_predictions(perfect, dir.path / "p.json");

    const auto r = run({"eval", "--predictions", dir.str("p.json"), "--split", dir.str("data/test"),
                        "--out", dir.str("curves")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("average_map 1\n") != std::string::npos);
    CHECK(fs::exists(dir.path / "curves"));

    const auto g = run({"eval", "--predictions", dir.str("p.json"), "--split", dir.str("data/test"),
                        "--delta-grid", "10:30:10"});
    REQUIRE(g.code == 0);
    CHECK(g.out.find("delta 10 s") != std::string::npos);
    CHECK(g.out.find("delta 30 s") != std::string::npos);
    CHECK(g.out.find("delta 5 s") == std::string::npos);

    CHECK(run({"eval", "--split", dir.str("data/test")}).code == 1);
}

TEST_CASE("train, infer and eval run end to end on a tiny corpus") {
    TempDir dir("rmsnet_cli_e2e");
    REQUIRE(synth(dir.str("data")).code == 0);
    const std::vector<std::string> small{"--feature-dim", "8", "--fc1", "8", "--conv1", "4",
                                         "--conv2", "4", "--fc2", "4"};
    std::vector<std::string> train{"train", "--data", dir.str("data"), "--out", dir.str("run"),
                                   "--epochs", "2", "--batch", "8", "--seed", "3"};
    train.insert(train.end(), small.begin(), small.end());
    const auto t = run(train);
    REQUIRE(t.code == 0);
    CHECK(t.out.find("# seed = 3") != std::string::npos);
    CHECK(fs::exists(dir.path / "run" / "best.rmsn"));
    CHECK(fs::exists(dir.path / "run" / "metrics.jsonl"));

    const auto ckpt = dir.str("run/best.rmsn");
    REQUIRE(run({"infer", "--checkpoint", ckpt, "--split", dir.str("data/test"), "--out",
                 dir.str("pred.json"), "--vote-density", dir.str("votes")})
                .code == 0);
    CHECK_NOTHROW(load_predictions(dir.path / "pred.json"));
    CHECK(fs::exists(dir.path / "votes" / "test_000_votes.csv"));

    const auto e = run({"eval", "--checkpoint", ckpt, "--split", dir.str("data/test")});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("average_map") != std::string::npos);

    // mismatched feature width is a data error
    TempDir other("rmsnet_cli_e2e_wide");
    REQUIRE(run({"synth", "--out", other.str(), "--feature-dim", "12", "--train-matches", "1",
                 "--val-matches", "1", "--test-matches", "1"})
                .code == 0);
    CHECK(run({"eval", "--checkpoint", ckpt, "--split", other.str("test")}).code == 2);
}

TEST_CASE("gradcheck exit codes") {
    const std::vector<std::string> small{"gradcheck", "--feature-dim", "6", "--fc1", "8",
                                         "--conv1", "6", "--conv2", "6", "--fc2", "6"};
    const auto ok = run(small);
    CHECK(ok.code == 0);
    CHECK(ok.out.find("gradcheck passed") != std::string::npos);

    auto faulty = small;
    faulty.push_back("--inject-fault");
    const auto bad = run(faulty);
    CHECK(bad.code == 3);
    CHECK(bad.out.find("gradcheck FAILED") != std::string::npos);
}

TEST_CASE("the installed binary maps exit codes the same way") {
    const std::string cmd = std::string(RMSNET_CLI_PATH) + " bogus >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 1);
}
