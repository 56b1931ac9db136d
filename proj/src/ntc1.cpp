#include "focustrack/ntc1.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "focustrack/errors.hpp"

namespace focustrack {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'C', '1'};

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::string_view in, std::size_t pos) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    return v;
}

}  // namespace

std::string encode_ntc1(const GradientTape& tensors, const nlohmann::json& meta) {
    nlohmann::json manifest;
    manifest["tensors"] = nlohmann::json::array();
    std::string blob;
    for (const auto& [name, t] : tensors.params()) {
        const int code = t.dtype() == DType::f32 ? 0 : 1;
        manifest["tensors"].push_back({{"name", name},
                                       {"dtype", code},
                                       {"rank", t.rank()},
                                       {"shape", t.shape()},
                                       {"offset", blob.size()}});
        for (double v : t.values()) {
            if (t.dtype() == DType::f32) {
                put_le(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                put_le(blob, std::bit_cast<std::uint64_t>(v));
            }
        }
    }
    manifest["meta"] = meta;
    const std::string text = manifest.dump();
    std::string out(kMagic, 4);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    out += blob;
    return out;
}

Ntc1Contents decode_ntc1(std::string_view bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("NTC1: bad magic");
    const auto len = get_le<std::uint64_t>(bytes, 4);
    if (12 + len > bytes.size()) throw FormatError("NTC1: truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(12, len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("NTC1: manifest is not JSON: ") + e.what());
    }
    const std::string_view blob = bytes.substr(12 + len);
    Ntc1Contents out;
    out.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name");
        const int code = entry.at("dtype");
        const Shape shape = entry.at("shape").get<Shape>();
        if (entry.at("rank").get<std::size_t>() != shape.size()) throw FormatError("NTC1: rank mismatch for " + name);
        const std::size_t offset = entry.at("offset");
        const std::size_t n = shape_numel(shape);
        const std::size_t width = code == 0 ? 4 : 8;
        if (code != 0 && code != 1) throw FormatError("NTC1: unknown dtype code for " + name);
        if (offset + n * width > blob.size()) throw FormatError("NTC1: blob too short for " + name);
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pos = offset + i * width;
            values[i] = code == 0 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(blob, pos)))
                                  : std::bit_cast<double>(get_le<std::uint64_t>(blob, pos));
        }
        out.tensors.add(name, Tensor(shape, std::move(values), code == 0 ? DType::f32 : DType::f64));
    }
    return out;
}

void save_ntc1(const std::filesystem::path& path, const GradientTape& tensors, const nlohmann::json& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    const std::string bytes = encode_ntc1(tensors, meta);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Ntc1Contents load_ntc1(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_ntc1(ss.str());
}

}  // namespace focustrack
