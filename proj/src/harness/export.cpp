#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "sbn/diagnostics.hpp"
#include "sbn/harness.hpp"

namespace sbn {

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw InvalidArgument("to_chars failed");
    return std::string(buf, ptr);
}

struct Row {
    std::uint64_t seed;
    std::size_t step;
    double raw;
};

}  // namespace

void export_plotdata(const std::string& run_dir) {
    namespace fs = std::filesystem;
    fs::path dir(run_dir);
    std::ifstream mis(dir / "manifest.json");
    if (!mis) throw MissingMetrics("no manifest.json in " + run_dir);
    nlohmann::json manifest = nlohmann::json::parse(mis, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("metrics") ||
        !manifest.contains("seeds"))
        throw CorruptRecord("manifest.json is malformed in " + run_dir);

    std::vector<std::string> metric_names =
        manifest["metrics"].get<std::vector<std::string>>();
    std::map<std::string, std::vector<Row>> rows;
    for (const auto& name : metric_names) rows[name];

    for (auto seed : manifest["seeds"].get<std::vector<std::uint64_t>>()) {
        fs::path mpath = dir / ("metrics_seed" + std::to_string(seed) + ".jsonl");
        std::ifstream is(mpath);
        if (!is) throw MissingMetrics("missing " + mpath.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
            if (rec.is_discarded())
                throw CorruptRecord(mpath.string() + ":" + std::to_string(lineno));
            for (const char* key : {"experiment", "variant", "seed", "step"})
                if (!rec.contains(key))
                    throw CorruptRecord(mpath.string() + ":" + std::to_string(lineno) +
                                        " lacks '" + key + "'");
            auto step = rec["step"].get<std::size_t>();
            auto rec_seed = rec["seed"].get<std::uint64_t>();
            std::string suffix;
            if (rec.contains("stage"))
                suffix = ".s" + std::to_string(rec["stage"].get<std::size_t>());
            for (auto& [key, value] : rec.items()) {
                if (key == "experiment" || key == "variant" || key == "seed" ||
                    key == "step" || key == "stage")
                    continue;
                if (!value.is_number()) continue;
                auto it = rows.find(key + suffix);
                if (it == rows.end()) it = rows.find(key);
                if (it != rows.end())
                    it->second.push_back({rec_seed, step, value.get<double>()});
            }
        }
    }

    fs::path plot_dir = dir / "plots";
    fs::create_directories(plot_dir);
    for (auto& [name, data] : rows) {
        std::stable_sort(data.begin(), data.end(), [](const Row& a, const Row& b) {
            return a.seed != b.seed ? a.seed < b.seed : a.step < b.step;
        });
        std::ofstream os(plot_dir / (name + ".csv"), std::ios::binary);
        os << "step,seed,raw,ema\n";
        std::size_t i = 0;
        while (i < data.size()) {
            std::size_t j = i;
            while (j < data.size() && data[j].seed == data[i].seed) ++j;
            std::vector<double> series;
            for (std::size_t k = i; k < j; ++k) series.push_back(data[k].raw);
            std::vector<double> ema = ema_smooth(series, 0.9);
            for (std::size_t k = i; k < j; ++k)
                os << data[k].step << "," << data[k].seed << ","
                   << format_double(data[k].raw) << "," << format_double(ema[k - i])
                   << "\n";
            i = j;
        }
    }
}

}  // namespace sbn
