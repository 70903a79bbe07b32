#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace matte {

/// Row-major 2-D array of plain values. The substrate for masks, alpha
/// mattes and single-channel real maps.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t width, std::size_t height, T fill = T{})
        : width_(width), height_(height), cells_(width * height, fill) {}

    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }

    T& at(std::size_t x, std::size_t y) { return cells_[y * width_ + x]; }
    const T& at(std::size_t x, std::size_t y) const { return cells_[y * width_ + x]; }

    T& operator[](std::size_t i) { return cells_[i]; }
    const T& operator[](std::size_t i) const { return cells_[i]; }

    std::vector<T>& cells() { return cells_; }
    const std::vector<T>& cells() const { return cells_; }

    bool same_extent(const Grid& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<T> cells_;
};

/// Boolean mask; 0 = false, 1 = true.
using BinaryMask = Grid<std::uint8_t>;

/// Single-channel real map; alpha mattes keep values in [0, 1].
using RealMap = Grid<double>;
using AlphaMatte = RealMap;

struct ImageRGB {
    RealMap r, g, b;

    ImageRGB() = default;
    ImageRGB(std::size_t width, std::size_t height)
        : r(width, height), g(width, height), b(width, height) {}

    std::size_t width() const { return r.width(); }
    std::size_t height() const { return r.height(); }

    bool same_extent(const ImageRGB& o) const { return r.same_extent(o.r); }

    const RealMap& channel(std::size_t c) const {
        switch (c) {
            case 0: return r;
            case 1: return g;
            default: return b;
        }
    }
    RealMap& channel(std::size_t c) {
        switch (c) {
            case 0: return r;
            case 1: return g;
            default: return b;
        }
    }
};

inline std::size_t count_true(const BinaryMask& m) {
    std::size_t n = 0;
    for (auto v : m.cells()) n += (v != 0);
    return n;
}

inline BinaryMask mask_not(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
    return out;
}

inline void require_same_extent(const Grid<double>& a, const Grid<double>& b, const char* what) {
    if (!a.same_extent(b)) throw std::invalid_argument(std::string(what) + ": extent mismatch");
}

}  // namespace matte
