#include <fstream>

#include <json.hpp>

#include "sbn/harness.hpp"

namespace sbn {

struct MetricsWriter::Impl {
    std::ofstream os;
};

MetricsWriter::MetricsWriter(const std::string& path) : impl(new Impl) {
    impl->os.open(path, std::ios::trunc);
    if (!impl->os) throw MissingMetrics("cannot open metrics file: " + path);
}

MetricsWriter::~MetricsWriter() { delete impl; }

void MetricsWriter::write(const std::string& experiment, const std::string& variant,
                          std::uint64_t seed, std::size_t step,
                          const std::vector<std::pair<std::string, double>>& fields,
                          std::optional<std::size_t> stage,
                          const std::vector<std::size_t>* derived_arch,
                          const std::vector<std::vector<double>>* alpha) {
    nlohmann::ordered_json rec;
    rec["experiment"] = experiment;
    rec["variant"] = variant;
    rec["seed"] = seed;
    rec["step"] = step;
    if (stage) rec["stage"] = *stage;
    for (const auto& [name, value] : fields) rec[name] = value;
    if (derived_arch) rec["derived_arch"] = *derived_arch;
    if (alpha) rec["alpha"] = *alpha;
    impl->os << rec.dump() << "\n";
}

}  // namespace sbn
