#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "foldlm/config_json.hpp"
#include "foldlm/model.hpp"

namespace foldlm {

/// Checkpoint layout, all integers and floats little-endian:
///   "FOLDLM1"                         7-byte magic
///   u32 config length, config JSON    model configuration
///   u32 tensor count
///   per tensor: u32 name length, name bytes, u64 rows, u64 cols,
///               rows*cols f64 values
inline constexpr char kCheckpointMagic[8] = "FOLDLM1";

namespace detail {

template <class T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        os.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <class T>
T read_le(std::istream& is) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = is.get();
        if (c == EOF) throw FormatError("checkpoint truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
}

inline void write_f64(std::ostream& os, double d) {
    write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(d));
}

inline double read_f64(std::istream& is) {
    return std::bit_cast<double>(read_le<std::uint64_t>(is));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                            const Parameters& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kCheckpointMagic, 7);
    const std::string config = model_to_json(cfg).dump();
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(config.size()));
    os.write(config.data(), static_cast<std::streamsize>(config.size()));

    std::uint32_t count = 0;
    params.for_each([&](const std::string&, const Mat&) { ++count; });
    detail::write_le<std::uint32_t>(os, count);
    params.for_each([&](const std::string& name, const Mat& m) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le<std::uint64_t>(os, m.rows());
        detail::write_le<std::uint64_t>(os, m.cols());
        for (double v : m.raw()) detail::write_f64(os, v);
    });
    if (!os) throw IoError("write failed: " + path);
}

inline std::pair<ModelConfig, Parameters> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[7];
    is.read(magic, 7);
    if (is.gcount() != 7 || std::memcmp(magic, kCheckpointMagic, 7) != 0)
        throw FormatError("bad checkpoint magic");
    const std::uint32_t config_len = detail::read_le<std::uint32_t>(is);
    std::string config(config_len, '\0');
    is.read(config.data(), config_len);
    if (is.gcount() != static_cast<std::streamsize>(config_len))
        throw FormatError("checkpoint truncated in config block");
    ModelConfig cfg;
    try {
        cfg = model_from_json(nlohmann::json::parse(config));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad config block: ") + e.what());
    }

    // Everything is parsed into a scratch model first; nothing partial can
    // escape on error.
    Parameters params = init_parameters(cfg);
    const std::uint32_t count = detail::read_le<std::uint32_t>(is);
    std::uint32_t seen = 0;
    params.for_each([&](const std::string& name, Mat& m) {
        if (seen >= count) throw FormatError("checkpoint missing tensor " + name);
        ++seen;
        const std::uint32_t name_len = detail::read_le<std::uint32_t>(is);
        std::string stored(name_len, '\0');
        is.read(stored.data(), name_len);
        if (is.gcount() != static_cast<std::streamsize>(name_len))
            throw FormatError("checkpoint truncated in tensor name");
        if (stored != name)
            throw FormatError("tensor order mismatch: expected " + name + ", got " + stored);
        const std::uint64_t rows = detail::read_le<std::uint64_t>(is);
        const std::uint64_t cols = detail::read_le<std::uint64_t>(is);
        if (rows != m.rows() || cols != m.cols())
            throw FormatError("tensor shape mismatch for " + name);
        for (double& v : m.raw()) v = detail::read_f64(is);
    });
    if (seen != count) throw FormatError("checkpoint has extra tensors");
    return {cfg, std::move(params)};
}

}  // namespace foldlm
