#include "rmsnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace rmsnet {

std::string_view to_string(MatchingPolicy policy) {
    return policy == MatchingPolicy::OneToOne ? "one-to-one" : "many-to-one";
}

MatchingPolicy matching_policy_from_string(std::string_view text) {
    if (text == "one-to-one") return MatchingPolicy::OneToOne;
    if (text == "many-to-one") return MatchingPolicy::ManyToOne;
    detail::raise(ErrorKind::Config, "matching must be 'one-to-one' or 'many-to-one', got '", text,
                  "'");
}

double ap_at_delta(std::span<const SpotPrediction> predictions,
                   std::span<const GroundTruthSpot> truth, double delta, Index cls,
                   MatchingPolicy policy) {
    RMSNET_REQUIRE(delta > 0.0, Config, "tolerance must be positive, got ", delta);

    std::unordered_map<std::string_view, std::vector<double>> spots; // per match
    std::size_t positives = 0;
    for (const auto& g : truth) {
        if (g.cls != cls) continue;
        spots[g.match_id].push_back(g.seconds);
        ++positives;
    }
    if (positives == 0) return 0.0;

    std::vector<const SpotPrediction*> ranked;
    for (const auto& p : predictions)
        if (p.cls == cls) ranked.push_back(&p);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto* a, const auto* b) { return a->confidence > b->confidence; });

    std::unordered_map<std::string_view, std::vector<char>> used;
    for (const auto& [id, times] : spots) used[id].assign(times.size(), 0);

    std::vector<char> recalls(ranked.size(), 0);
    std::vector<double> precision(ranked.size());
    std::size_t true_positives = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto it = spots.find(ranked[i]->match_id);
        if (it != spots.end()) {
            auto& taken = used[it->first];
            std::ptrdiff_t best = -1;
            double best_distance = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < it->second.size(); ++j) {
                if (policy == MatchingPolicy::OneToOne && taken[j]) continue;
                const double d = std::abs(ranked[i]->seconds - it->second[j]);
                if (d <= delta && d < best_distance) {
                    best = static_cast<std::ptrdiff_t>(j);
                    best_distance = d;
                }
            }
            if (best >= 0) {
                ++true_positives;
                recalls[i] = taken[static_cast<std::size_t>(best)] ? 0 : 1;
                taken[static_cast<std::size_t>(best)] = 1;
            }
        }
        precision[i] = static_cast<double>(true_positives) / static_cast<double>(i + 1);
    }

    for (std::size_t i = ranked.size(); i-- > 1;)
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double area = 0.0;
    for (std::size_t i = 0; i < ranked.size(); ++i)
        if (recalls[i]) area += precision[i];
    return area / static_cast<double>(positives);
}

double map_at_delta(std::span<const SpotPrediction> predictions,
                    std::span<const GroundTruthSpot> truth, double delta, Index num_classes,
                    MatchingPolicy policy) {
    RMSNET_REQUIRE(num_classes >= 1, Config, "need at least one event class");
    double sum = 0.0;
    Index counted = 0;
    for (Index c = 0; c < num_classes; ++c) {
        const bool present =
            std::any_of(truth.begin(), truth.end(), [&](const auto& g) { return g.cls == c; });
        if (!present) continue;
        sum += ap_at_delta(predictions, truth, delta, c, policy);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

double trapezoid_mean(std::span<const double> x, std::span<const double> y) {
    RMSNET_REQUIRE(x.size() == y.size() && x.size() >= 2, Config,
                   "trapezoid needs matching grids of at least 2 points");
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k)
        area += (x[k + 1] - x[k]) * (y[k] + y[k + 1]) * 0.5;
    return area / (x.back() - x.front());
}

std::vector<double> default_delta_grid() {
    std::vector<double> grid;
    for (int d = 5; d <= 60; d += 5) grid.push_back(d);
    return grid;
}

std::vector<double> parse_delta_grid(std::string_view text) {
    double start = 0, stop = 0, step = 0;
    char tail = 0;
    const std::string s(text);
    RMSNET_REQUIRE(std::sscanf(s.c_str(), "%lf:%lf:%lf%c", &start, &stop, &step, &tail) == 3,
                   Config, "delta grid must be 'start:stop:step', got '", text, "'");
    RMSNET_REQUIRE(start > 0 && step > 0 && stop > start, Config, "invalid delta grid '", text,
                   "'");
    std::vector<double> grid;
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long k = 0; k <= n; ++k) grid.push_back(start + static_cast<double>(k) * step);
    return grid;
}

EvalReport average_map(std::span<const SpotPrediction> predictions,
                       std::span<const GroundTruthSpot> truth, const EvalOptions& options) {
    RMSNET_REQUIRE(options.deltas.size() >= 2, Config, "delta grid needs at least 2 points");
    RMSNET_REQUIRE(std::is_sorted(options.deltas.begin(), options.deltas.end()), Config,
                   "delta grid must be ascending");
    const auto classes = static_cast<std::size_t>(options.num_classes);
    EvalReport report;
    report.deltas = options.deltas;
    report.per_class_ap.assign(classes, std::vector<double>(options.deltas.size(), 0.0));
    for (std::size_t k = 0; k < options.deltas.size(); ++k) {
        for (std::size_t c = 0; c < classes; ++c)
            report.per_class_ap[c][k] = ap_at_delta(predictions, truth, options.deltas[k],
                                                    static_cast<Index>(c), options.matching);
        report.map.push_back(
            map_at_delta(predictions, truth, options.deltas[k], options.num_classes,
                         options.matching));
    }
    report.average_map = trapezoid_mean(report.deltas, report.map);
    for (std::size_t c = 0; c < classes; ++c)
        report.per_class_average_ap.push_back(trapezoid_mean(report.deltas, report.per_class_ap[c]));
    return report;
}

namespace {

std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    RMSNET_REQUIRE(is.good(), Io, "cannot open ", path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::ofstream open_text(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    RMSNET_REQUIRE(os.good(), Io, "cannot write ", path.string());
    return os;
}

} // namespace

void export_curves(const EvalReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    RMSNET_REQUIRE(!ec, Io, "cannot create ", dir.string(), ": ", ec.message());
    {
        auto os = open_text(dir / "map_curve.csv");
        os << "delta,map\n";
        for (std::size_t k = 0; k < report.deltas.size(); ++k)
            os << number(report.deltas[k]) << ',' << number(report.map[k]) << '\n';
        RMSNET_REQUIRE(os.good(), Io, "failed writing map_curve.csv");
    }
    {
        auto os = open_text(dir / "ap_curve.csv");
        os << "delta";
        for (std::size_t c = 0; c < report.per_class_ap.size(); ++c)
            os << ',' << class_name(static_cast<Index>(c));
        os << '\n';
        for (std::size_t k = 0; k < report.deltas.size(); ++k) {
            os << number(report.deltas[k]);
            for (const auto& row : report.per_class_ap) os << ',' << number(row[k]);
            os << '\n';
        }
        RMSNET_REQUIRE(os.good(), Io, "failed writing ap_curve.csv");
    }
    nlohmann::json summary;
    summary["averageMap"] = report.average_map;
    summary["deltas"] = report.deltas;
    summary["map"] = report.map;
    for (std::size_t c = 0; c < report.per_class_average_ap.size(); ++c)
        summary["perClassAverageAp"][class_name(static_cast<Index>(c))] =
            report.per_class_average_ap[c];
    auto os = open_text(dir / "summary.json");
    os << summary.dump(2) << '\n';
    RMSNET_REQUIRE(os.good(), Io, "failed writing summary.json");
}

EvalReport read_curves(const std::filesystem::path& dir) {
    EvalReport report;
    const auto map_rows = read_csv(dir / "map_curve.csv");
    RMSNET_REQUIRE(!map_rows.empty() && map_rows[0].size() == 2, Format, "bad map_curve.csv header");
    for (std::size_t i = 1; i < map_rows.size(); ++i) {
        RMSNET_REQUIRE(map_rows[i].size() == 2, Format, "bad map_curve.csv row ", i);
        report.deltas.push_back(std::stod(map_rows[i][0]));
        report.map.push_back(std::stod(map_rows[i][1]));
    }
    const auto ap_rows = read_csv(dir / "ap_curve.csv");
    RMSNET_REQUIRE(!ap_rows.empty() && ap_rows.size() == map_rows.size(), Format,
                   "ap_curve.csv and map_curve.csv disagree");
    const std::size_t classes = ap_rows[0].size() - 1;
    report.per_class_ap.assign(classes, {});
    for (std::size_t i = 1; i < ap_rows.size(); ++i) {
        RMSNET_REQUIRE(ap_rows[i].size() == classes + 1, Format, "bad ap_curve.csv row ", i);
        for (std::size_t c = 0; c < classes; ++c)
            report.per_class_ap[c].push_back(std::stod(ap_rows[i][c + 1]));
    }
    if (report.deltas.size() >= 2) {
        report.average_map = trapezoid_mean(report.deltas, report.map);
        for (const auto& row : report.per_class_ap)
            report.per_class_average_ap.push_back(trapezoid_mean(report.deltas, row));
    }
    return report;
}

} // namespace rmsnet
