#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "foldlm/model.hpp"
#include "foldlm/rng.hpp"

namespace foldlm {

struct CategoryData {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held;
};

/// Read per-category files (raw bytes) and split 90/10 with the held-out
/// part being the contiguous suffix.
inline std::map<std::string, CategoryData> load_corpus(
    const std::map<std::string, std::string>& paths) {
    if (paths.empty()) throw ConfigError("no corpus categories configured");
    std::map<std::string, CategoryData> out;
    for (const auto& [category, path] : paths) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open corpus file: " + path);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        if (bytes.empty()) throw ConfigError("empty corpus file: " + path);
        const auto tokens = tokenize(bytes);
        const std::size_t cut = tokens.size() * 9 / 10;
        CategoryData data;
        data.train.assign(tokens.begin(), tokens.begin() + cut);
        data.held.assign(tokens.begin() + cut, tokens.end());
        out[category] = std::move(data);
    }
    return out;
}

namespace detail {

inline const std::vector<std::string>& synth_pool(const std::string& style, int which) {
    static const std::vector<std::string> tech_nouns = {
        "module",  "buffer", "kernel",  "socket", "packet", "thread", "cache",
        "pointer", "vector", "matrix",  "driver", "sensor", "signal", "filter",
        "router",  "parser", "encoder", "shader", "branch", "register"};
    static const std::vector<std::string> tech_verbs = {
        "allocates", "computes", "transmits", "validates", "compiles", "encodes",
        "resolves",  "schedules", "measures",  "indexes",   "caches",   "routes"};
    static const std::vector<std::string> tech_adjs = {
        "parallel", "recursive", "stable", "volatile", "adaptive",
        "bounded",  "sparse",    "cyclic", "nested",   "uniform"};
    static const std::vector<std::string> plain_nouns = {
        "river",  "mountain", "garden", "letter",  "morning", "window", "painter",
        "bridge", "harbor",   "forest", "lantern", "teacher", "market", "journey",
        "winter", "village",  "shadow", "captain", "meadow",  "story"};
    static const std::vector<std::string> plain_verbs = {
        "crosses", "remembers", "follows", "carries", "watches", "reaches",
        "gathers", "discovers", "returns", "whispers", "guards",  "awaits"};
    static const std::vector<std::string> plain_adjs = {
        "quiet", "golden", "distant", "narrow",  "ancient",
        "gentle", "bright", "hidden",  "weathered", "patient"};
    const bool tech = style == "technical" || style == "scientific";
    switch (which) {
        case 0: return tech ? tech_nouns : plain_nouns;
        case 1: return tech ? tech_verbs : plain_verbs;
        default: return tech ? tech_adjs : plain_adjs;
    }
}

}  // namespace detail

/// Deterministic pseudo-natural text for experiments and tests: simple
/// sentences over a style-specific vocabulary, numbers sprinkled into
/// technical output. Same style, size, and seed give identical bytes.
inline std::string synth_corpus(const std::string& style, std::size_t bytes,
                                std::uint64_t seed) {
    const auto& nouns = detail::synth_pool(style, 0);
    const auto& verbs = detail::synth_pool(style, 1);
    const auto& adjs = detail::synth_pool(style, 2);
    RngState rng(seed ^ 0x5EEDC0DEULL);
    std::string out;
    out.reserve(bytes + 64);
    const bool tech = style == "technical" || style == "scientific";
    while (out.size() < bytes) {
        const std::string& n1 = nouns[rng_below(rng, nouns.size())];
        const std::string& n2 = nouns[rng_below(rng, nouns.size())];
        const std::string& v = verbs[rng_below(rng, verbs.size())];
        const std::string& a = adjs[rng_below(rng, adjs.size())];
        switch (rng_below(rng, 4)) {
            case 0:
                out += "the " + a + " " + n1 + " " + v + " the " + n2 + ". ";
                break;
            case 1:
                out += "a " + n1 + " " + v + " one " + a + " " + n2 + ". ";
                break;
            case 2:
                if (tech) {
                    out += n1 + " " + std::to_string(rng_below(rng, 100)) + " " + v + " " +
                           std::to_string(rng_below(rng, 10)) + "." +
                           std::to_string(rng_below(rng, 10)) + " units. ";
                } else {
                    out += "every " + n1 + " " + v + " a " + a + " " + n2 + ". ";
                }
                break;
            default:
                out += "when the " + n1 + " " + v + ", the " + n2 + " is " + a + ". ";
                break;
        }
    }
    out.resize(bytes);
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace foldlm
