#pragma once

// Little-endian float32 array blocks with a shape header:
//   uint32 ndim | uint32 dim[ndim] | float32 data[prod(dim)]
// Blocks are concatenated in one file; readers seek to recorded offsets.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lanerep::io {

struct ArrayBlock {
    std::vector<uint32_t> shape;
    std::vector<float> data;
};

inline uint64_t write_block(std::ostream& os, const ArrayBlock& b) {
    uint64_t offset = static_cast<uint64_t>(os.tellp());
    uint32_t ndim = static_cast<uint32_t>(b.shape.size());
    os.write(reinterpret_cast<const char*>(&ndim), 4);
    for (uint32_t d : b.shape) os.write(reinterpret_cast<const char*>(&d), 4);
    os.write(reinterpret_cast<const char*>(b.data.data()),
             static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    return offset;
}

inline ArrayBlock read_block(std::istream& is, uint64_t offset) {
    is.seekg(static_cast<std::streamoff>(offset));
    uint32_t ndim = 0;
    is.read(reinterpret_cast<char*>(&ndim), 4);
    if (!is || ndim > 8) throw std::runtime_error("array block: bad header");
    ArrayBlock b;
    b.shape.resize(ndim);
    uint64_t n = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        is.read(reinterpret_cast<char*>(&b.shape[i]), 4);
        n *= b.shape[i];
    }
    b.data.resize(n);
    is.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw std::runtime_error("array block: truncated data");
    return b;
}

inline ArrayBlock from_matrix(const Eigen::MatrixXd& m) {
    ArrayBlock b;
    b.shape = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
    b.data.reserve(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) b.data.push_back(static_cast<float>(m(r, c)));
    return b;
}

inline Eigen::MatrixXd to_matrix(const ArrayBlock& b) {
    if (b.shape.size() != 2) throw std::runtime_error("array block: expected 2-D shape");
    Eigen::MatrixXd m(b.shape[0], b.shape[1]);
    size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = b.data[i++];
    return m;
}

inline ArrayBlock from_vector(const std::vector<double>& v) {
    ArrayBlock b;
    b.shape = {static_cast<uint32_t>(v.size())};
    b.data.assign(v.begin(), v.end());
    return b;
}

}  // namespace lanerep::io
