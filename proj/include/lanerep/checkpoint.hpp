#pragma once

// Versioned checkpoint container: config echo, named float32 tensors
// (parameters and batch-norm buffers), and the RNG seed.

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanerep/ad.hpp"

namespace lanerep::nn {

inline constexpr char kCkptMagic[8] = {'L', 'R', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr uint32_t kCkptVersion = 1;

struct Checkpoint {
    nlohmann::json config;
    uint64_t seed = 0;
    std::map<std::string, ad::Mat> tensors;
};

namespace detail {
inline void write_str(std::ostream& os, const std::string& s) {
    uint64_t n = s.size();
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(s.data(), static_cast<std::streamsize>(n));
}
inline std::string read_str(std::istream& is) {
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    if (!is || n > (1ull << 32)) throw std::runtime_error("checkpoint: bad string length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
}  // namespace detail

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot write " + path);
    os.write(kCkptMagic, 8);
    uint32_t ver = kCkptVersion;
    os.write(reinterpret_cast<const char*>(&ver), 4);
    detail::write_str(os, c.config.dump());
    os.write(reinterpret_cast<const char*>(&c.seed), 8);
    uint64_t n = c.tensors.size();
    os.write(reinterpret_cast<const char*>(&n), 8);
    for (const auto& [name, m] : c.tensors) {
        detail::write_str(os, name);
        uint32_t rows = static_cast<uint32_t>(m.rows()), cols = static_cast<uint32_t>(m.cols());
        os.write(reinterpret_cast<const char*>(&rows), 4);
        os.write(reinterpret_cast<const char*>(&cols), 4);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index col = 0; col < m.cols(); ++col) {
                float f = static_cast<float>(m(r, col));
                os.write(reinterpret_cast<const char*>(&f), 4);
            }
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kCkptMagic, 8))
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), 4);
    if (ver != kCkptVersion)
        throw std::runtime_error("load_checkpoint: version mismatch (file has v" +
                                 std::to_string(ver) + ")");
    Checkpoint c;
    c.config = nlohmann::json::parse(detail::read_str(is));
    is.read(reinterpret_cast<char*>(&c.seed), 8);
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = detail::read_str(is);
        uint32_t rows = 0, cols = 0;
        is.read(reinterpret_cast<char*>(&rows), 4);
        is.read(reinterpret_cast<char*>(&cols), 4);
        ad::Mat m(rows, cols);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t col = 0; col < cols; ++col) {
                float f = 0;
                is.read(reinterpret_cast<char*>(&f), 4);
                m(r, col) = f;
            }
        if (!is) throw std::runtime_error("load_checkpoint: truncated tensor data");
        c.tensors[name] = std::move(m);
    }
    return c;
}

}  // namespace lanerep::nn
