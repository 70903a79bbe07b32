#include "matte/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace matte {

namespace {

// Windowed all-true along one axis via prefix sums of false counts.
// `outside` decides whether windows reaching past the border fail (False)
// or are clipped to the image (True).
void erode_axis(const std::vector<std::uint8_t>& src, std::vector<std::uint8_t>& dst,
                std::size_t n, std::size_t stride, std::size_t count, std::size_t line_stride,
                int k, BorderAssume outside) {
    std::vector<std::size_t> false_prefix(n + 1);
    for (std::size_t line = 0; line < count; ++line) {
        std::size_t base = line * line_stride;
        false_prefix[0] = 0;
        for (std::size_t i = 0; i < n; ++i)
            false_prefix[i + 1] = false_prefix[i] + (src[base + i * stride] == 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(i) - k;
            std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(i) + k;
            if (outside == BorderAssume::False &&
                (lo < 0 || hi >= static_cast<std::ptrdiff_t>(n))) {
                dst[base + i * stride] = 0;
                continue;
            }
            lo = std::max<std::ptrdiff_t>(lo, 0);
            hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(n) - 1);
            dst[base + i * stride] =
                (false_prefix[hi + 1] - false_prefix[lo]) == 0 ? 1 : 0;
        }
    }
}

void dilate_axis(const std::vector<std::uint8_t>& src, std::vector<std::uint8_t>& dst,
                 std::size_t n, std::size_t stride, std::size_t count,
                 std::size_t line_stride, int k) {
    std::vector<std::size_t> true_prefix(n + 1);
    for (std::size_t line = 0; line < count; ++line) {
        std::size_t base = line * line_stride;
        true_prefix[0] = 0;
        for (std::size_t i = 0; i < n; ++i)
            true_prefix[i + 1] = true_prefix[i] + (src[base + i * stride] != 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t lo = static_cast<std::size_t>(
                std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) - k, 0));
            std::size_t hi = std::min<std::size_t>(i + k, n - 1);
            dst[base + i * stride] = (true_prefix[hi + 1] - true_prefix[lo]) > 0 ? 1 : 0;
        }
    }
}

}  // namespace

BinaryMask erode(const BinaryMask& m, int k, BorderAssume outside) {
    if (k < 0) throw std::invalid_argument("erode: negative radius");
    if (k == 0 || m.empty()) return m;
    std::size_t w = m.width(), h = m.height();
    BinaryMask tmp(w, h), out(w, h);
    // horizontal then vertical pass; the square window separates exactly
    erode_axis(m.cells(), tmp.cells(), w, 1, h, w, k, outside);
    std::vector<std::uint8_t> col_src = tmp.cells();
    erode_axis(col_src, out.cells(), h, w, w, 1, k, outside);
    return out;
}

BinaryMask dilate(const BinaryMask& m, int k) {
    if (k < 0) throw std::invalid_argument("dilate: negative radius");
    if (k == 0 || m.empty()) return m;
    std::size_t w = m.width(), h = m.height();
    BinaryMask tmp(w, h), out(w, h);
    dilate_axis(m.cells(), tmp.cells(), w, 1, h, w, k);
    std::vector<std::uint8_t> col_src = tmp.cells();
    dilate_axis(col_src, out.cells(), h, w, w, 1, k);
    return out;
}

RealMap gaussian_blur(const RealMap& img, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    if (img.empty()) return img;
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        kernel[i + radius] = v;
        ksum += v;
    }
    for (auto& v : kernel) v /= ksum;

    std::size_t w = img.width(), h = img.height();
    auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t n) {
        if (n == 1) return std::ptrdiff_t{0};
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * (n - 1) - i;
        }
        return i;
    };

    RealMap tmp(w, h), out(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                std::ptrdiff_t xx = reflect(static_cast<std::ptrdiff_t>(x) + t,
                                            static_cast<std::ptrdiff_t>(w));
                acc += kernel[t + radius] * img.at(static_cast<std::size_t>(xx), y);
            }
            tmp.at(x, y) = acc;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                std::ptrdiff_t yy = reflect(static_cast<std::ptrdiff_t>(y) + t,
                                            static_cast<std::ptrdiff_t>(h));
                acc += kernel[t + radius] * tmp.at(x, static_cast<std::size_t>(yy));
            }
            out.at(x, y) = acc;
        }
    return out;
}

}  // namespace matte
