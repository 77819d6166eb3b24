#include "sbn/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace sbn {

namespace {

constexpr char kMagic[4] = {'S', 'B', 'N', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kDtypeF64LE = 0x02;

void put_u64_le(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64_le(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64_le(os, bits);
}

double get_f64_le(std::istream& is) {
    std::uint64_t bits = get_u64_le(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CorruptTensorFile("cannot open for writing: " + path);
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(kDtypeF64LE));
    os.put(static_cast<char>(t.ndim()));
    for (auto e : t.shape()) put_u64_le(os, e);
    const Array& v = t.values();
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64_le(os, v[i]);
    if (!os) throw CorruptTensorFile("short write: " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CorruptTensorFile("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw CorruptTensorFile("bad magic in " + path);
    int version = is.get();
    int dtype = is.get();
    int ndim = is.get();
    if (version != kVersion) throw CorruptTensorFile("unsupported version in " + path);
    if (dtype != kDtypeF64LE) throw CorruptTensorFile("unsupported dtype in " + path);
    if (ndim < 1 || ndim > 4) throw CorruptTensorFile("bad rank in " + path);
    Shape shape(static_cast<std::size_t>(ndim));
    for (auto& e : shape) {
        e = static_cast<std::size_t>(get_u64_le(is));
        if (!is || e == 0) throw CorruptTensorFile("bad extent in " + path);
    }
    Array data(static_cast<Eigen::Index>(shape_size(shape)));
    for (Eigen::Index i = 0; i < data.size(); ++i) data[i] = get_f64_le(is);
    if (!is) throw CorruptTensorFile("truncated payload in " + path);
    return Tensor::constant(std::move(shape), std::move(data));
}

void save_tensor_dir(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor>>& roles) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "sbnt-dir";
    auto& tensors = manifest["tensors"] = nlohmann::ordered_json::object();
    for (const auto& [role, t] : roles) {
        std::string file = role + ".sbnt";
        write_tensor((fs::path(dir) / file).string(), t);
        tensors[role] = file;
    }
    std::ofstream os(fs::path(dir) / "manifest.json");
    os << manifest.dump(2) << "\n";
}

std::vector<std::pair<std::string, Tensor>> load_tensor_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw CorruptTensorFile("missing manifest.json in " + dir);
    nlohmann::ordered_json manifest = nlohmann::ordered_json::parse(is, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("tensors"))
        throw CorruptTensorFile("bad manifest in " + dir);
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [role, file] : manifest["tensors"].items())
        out.emplace_back(role, read_tensor((fs::path(dir) / file.get<std::string>()).string()));
    return out;
}

}  // namespace sbn
