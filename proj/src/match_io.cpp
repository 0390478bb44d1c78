#include <algorithm>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "rmsnet/binary_io.hpp"
#include "rmsnet/data.hpp"

namespace rmsnet {

namespace {

constexpr std::uint32_t kFeatureVersion = 1;

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    RMSNET_REQUIRE(is.good(), Io, "cannot open ", path.string());
    return is;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    RMSNET_REQUIRE(os.good(), Io, "cannot write ", path.string());
    return os;
}

MatrixF read_matrix_body(std::istream& is, std::uint32_t rows, std::uint32_t cols,
                         const std::string& what) {
    RMSNET_REQUIRE(rows > 0 && cols > 0, Format, what, ": empty shape ", rows, "x", cols);
    MatrixF m(rows, cols);
    io::read_floats(is, m.data(), static_cast<std::size_t>(m.size()), what);
    return m;
}

} // namespace

std::pair<int, int> parse_game_time(std::string_view text) {
    static const std::regex pattern(R"(^\s*(\d+)\s*-\s*(\d{1,3}):(\d{2})\s*$)");
    std::cmatch m;
    RMSNET_REQUIRE(std::regex_match(text.begin(), text.end(), m, pattern), Parse,
                   "malformed game time '", text, "', expected 'H - MM:SS'");
    const int half = std::stoi(m[1].str());
    const int minutes = std::stoi(m[2].str());
    const int seconds = std::stoi(m[3].str());
    RMSNET_REQUIRE(half == 1 || half == 2, Parse, "invalid half ", half, " in '", text, "'");
    RMSNET_REQUIRE(seconds < 60, Parse, "invalid seconds in '", text, "'");
    return {half, 60 * minutes + seconds};
}

std::string format_game_time(int half, int seconds) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%d - %02d:%02d", half, seconds / 60, seconds % 60);
    return buf;
}

void save_features(const MatrixF& features, const std::filesystem::path& path) {
    auto os = open_out(path);
    os.write("RMSF", 4);
    io::write_u32(os, kFeatureVersion);
    io::write_u32(os, static_cast<std::uint32_t>(features.rows()));
    io::write_u32(os, static_cast<std::uint32_t>(features.cols()));
    io::write_floats(os, features.data(), static_cast<std::size_t>(features.size()));
    RMSNET_REQUIRE(os.good(), Io, "failed writing ", path.string());
}

MatrixF load_features(const std::filesystem::path& path) {
    auto is = open_in(path);
    const std::string what = path.string();
    io::expect_magic(is, "RMSF", what);
    const auto version = io::read_u32(is, what);
    RMSNET_REQUIRE(version == kFeatureVersion, Format, what, ": unsupported version ", version);
    const auto rows = io::read_u32(is, what);
    const auto cols = io::read_u32(is, what);
    return read_matrix_body(is, rows, cols, what);
}

MatrixF import_raw_features(const std::filesystem::path& path) {
    auto is = open_in(path);
    const std::string what = path.string();
    const auto rows = io::read_u32(is, what);
    const auto cols = io::read_u32(is, what);
    auto m = read_matrix_body(is, rows, cols, what);
    RMSNET_REQUIRE(is.peek() == std::char_traits<char>::eof(), Format, what,
                   ": trailing bytes after ", rows, "x", cols, " floats");
    return m;
}

void save_labels(const MatchRecord& match, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["matchId"] = match.id;
    doc["featureRate"] = match.feature_rate;
    doc["numFrames"] = match.length();
    doc["secondHalfStartFrame"] = match.second_half_start;
    doc["annotations"] = nlohmann::json::array();
    for (const Event& e : match.events) {
        const Index half_start = e.half == 2 ? match.second_half_start : 0;
        const auto seconds = static_cast<int>(
            std::lround(static_cast<double>(e.frame - half_start) / match.feature_rate));
        doc["annotations"].push_back(
            {{"gameTime", format_game_time(e.half, seconds)}, {"label", class_name(e.cls)}});
    }
    auto os = open_out(path);
    os << doc.dump(2) << '\n';
    RMSNET_REQUIRE(os.good(), Io, "failed writing ", path.string());
}

void save_match(const MatchRecord& match, const std::filesystem::path& features_path,
                const std::filesystem::path& labels_path) {
    save_features(match.features, features_path);
    save_labels(match, labels_path);
}

MatchRecord load_match(const std::filesystem::path& features_path,
                       const std::filesystem::path& labels_path, Index num_classes) {
    MatchRecord match;
    match.features = load_features(features_path);

    auto is = open_in(labels_path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
        match.id = doc.at("matchId").get<std::string>();
        match.feature_rate = doc.value("featureRate", 2.0);
        match.second_half_start = doc.value("secondHalfStartFrame", match.length() / 2);
        for (const auto& a : doc.at("annotations")) {
            const auto [half, seconds] = parse_game_time(a.at("gameTime").get<std::string>());
            Event e;
            e.half = half;
            e.cls = class_from_name(a.at("label").get<std::string>());
            e.frame = (half == 2 ? match.second_half_start : 0) +
                      static_cast<Index>(std::lround(seconds * match.feature_rate));
            match.events.push_back(e);
        }
    } catch (const nlohmann::json::exception& ex) {
        detail::raise(ErrorKind::Format, labels_path.string(), ": ", ex.what());
    }
    if (doc.contains("numFrames")) {
        RMSNET_REQUIRE(doc["numFrames"].get<Index>() == match.length(), Consistency,
                       labels_path.string(), ": numFrames ", doc["numFrames"].get<Index>(),
                       " but features have ", match.length(), " frames");
    }
    std::stable_sort(match.events.begin(), match.events.end(),
                     [](const Event& a, const Event& b) { return a.frame < b.frame; });
    match.validate(num_classes);
    return match;
}

std::vector<MatchRecord> load_split(const std::filesystem::path& dir, Index num_classes) {
    RMSNET_REQUIRE(std::filesystem::is_directory(dir), Io, "not a directory: ", dir.string());
    std::vector<std::filesystem::path> feature_files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".rmsf") feature_files.push_back(entry.path());
    std::sort(feature_files.begin(), feature_files.end());
    std::vector<MatchRecord> matches;
    for (const auto& f : feature_files) {
        auto labels = f;
        labels.replace_extension(".json");
        matches.push_back(load_match(f, labels, num_classes));
    }
    return matches;
}

} // namespace rmsnet
