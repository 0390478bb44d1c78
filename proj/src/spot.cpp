#include "rmsnet/spot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace rmsnet {

std::vector<GroundTruthSpot> ground_truth(std::span<const MatchRecord> matches) {
    std::vector<GroundTruthSpot> out;
    for (const auto& m : matches)
        for (const auto& e : m.events) out.push_back({m.id, m.seconds(e.frame), e.cls});
    return out;
}

void save_predictions(std::span<const SpotPrediction> predictions,
                      const std::filesystem::path& path) {
    std::vector<SpotPrediction> sorted(predictions.begin(), predictions.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.match_id != b.match_id ? a.match_id < b.match_id : a.frame < b.frame;
    });
    nlohmann::json doc;
    doc["predictions"] = nlohmann::json::array();
    for (const auto& p : sorted) {
        doc["predictions"].push_back({{"matchId", p.match_id},
                                      {"frame", p.frame},
                                      {"position", p.position},
                                      {"seconds", p.seconds},
                                      {"half", p.half},
                                      {"label", class_name(p.cls)},
                                      {"confidence", p.confidence}});
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    RMSNET_REQUIRE(os.good(), Io, "cannot write ", path.string());
    os << doc.dump(1) << '\n';
    RMSNET_REQUIRE(os.good(), Io, "failed writing ", path.string());
}

std::vector<SpotPrediction> load_predictions(const std::filesystem::path& path) {
    std::ifstream is(path);
    RMSNET_REQUIRE(is.good(), Io, "cannot open ", path.string());
    std::vector<SpotPrediction> out;
    try {
        const auto doc = nlohmann::json::parse(is);
        for (const auto& r : doc.at("predictions")) {
            SpotPrediction p;
            p.match_id = r.at("matchId").get<std::string>();
            p.seconds = r.at("seconds").get<double>();
            p.frame = r.value("frame", Index{0});
            p.position = r.value("position", static_cast<double>(p.frame));
            p.half = r.value("half", 1);
            p.cls = class_from_name(r.at("label").get<std::string>());
            p.confidence = r.at("confidence").get<double>();
            out.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& ex) {
        detail::raise(ErrorKind::Format, path.string(), ": ", ex.what());
    }
    return out;
}

} // namespace rmsnet
