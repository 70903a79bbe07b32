#include "matte/trimap.hpp"

#include <algorithm>
#include <stdexcept>

#include "matte/morphology.hpp"
#include "matte/rng.hpp"

namespace matte {

Trimap trimap_from_alpha(const AlphaMatte& alpha, int fg_erosion_px, int bg_erosion_px) {
    if (fg_erosion_px < 0 || bg_erosion_px < 0)
        throw std::invalid_argument("trimap_from_alpha: negative erosion radius");
    std::size_t w = alpha.width(), h = alpha.height();
    BinaryMask fg0(w, h), bg0(w, h);
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        fg0[i] = alpha[i] >= 1.0 - kAlphaEpsilon;
        bg0[i] = alpha[i] <= kAlphaEpsilon;
    }
    BinaryMask fg = erode(fg0, fg_erosion_px);
    BinaryMask bg = erode(bg0, bg_erosion_px);
    Trimap t(w, h, TrimapLabel::Unknown);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (fg[i])
            t[i] = TrimapLabel::Foreground;
        else if (bg[i])
            t[i] = TrimapLabel::Background;
    }
    return t;
}

Trimap gt_trimap(const AlphaMatte& alpha, int erosion_px) {
    return trimap_from_alpha(alpha, erosion_px, erosion_px);
}

Trimap random_trimap(const AlphaMatte& alpha, std::uint64_t seed) {
    Rng rng(seed);
    int fg_px = static_cast<int>(rng.next_int(1, 29));
    int bg_px = static_cast<int>(rng.next_int(1, 29));
    return trimap_from_alpha(alpha, fg_px, bg_px);
}

BinaryMask trimap_mask(const Trimap& t, TrimapLabel label) {
    BinaryMask m(t.width(), t.height());
    for (std::size_t i = 0; i < t.size(); ++i) m[i] = t[i] == label;
    return m;
}

BinaryMask trimap_fg_or_unknown(const Trimap& t) {
    BinaryMask m(t.width(), t.height());
    for (std::size_t i = 0; i < t.size(); ++i)
        m[i] = t[i] == TrimapLabel::Foreground || t[i] == TrimapLabel::Unknown;
    return m;
}

namespace {

SoftSegmentation mask_to_softseg(const BinaryMask& m, double sigma) {
    RealMap real(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) real[i] = m[i] ? 1.0 : 0.0;
    SoftSegmentation seg;
    seg.fg_prob = sigma > 0.0 ? gaussian_blur(real, sigma) : real;
    for (auto& v : seg.fg_prob.cells()) v = std::clamp(v, 0.0, 1.0);
    seg.bg_prob = RealMap(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) seg.bg_prob[i] = 1.0 - seg.fg_prob[i];
    return seg;
}

}  // namespace

SoftSegmentation soft_segmentation_core(const Trimap& t, int erode_px, int dilate_px,
                                        double sigma, SoftSegOps ops, bool use_dilate) {
    BinaryMask m = trimap_fg_or_unknown(t);
    switch (ops) {
        case SoftSegOps::Open:
            m = dilate(erode(m, erode_px), dilate_px);
            break;
        case SoftSegOps::EitherSingle:
            m = use_dilate ? dilate(m, dilate_px) : erode(m, erode_px);
            break;
    }
    return mask_to_softseg(m, sigma);
}

SoftSegmentation soft_segmentation_from_trimap(const Trimap& t, std::uint64_t seed,
                                               SoftSegOps ops) {
    Rng rng(seed);
    int a = static_cast<int>(rng.next_int(1, 59));
    int b = static_cast<int>(rng.next_int(1, 59));
    double sigma = rng.next_range(1.0, 3.0);
    bool use_dilate = (rng.next_u64() & 1) != 0;
    return soft_segmentation_core(t, a, b, sigma, ops, use_dilate);
}

SoftSegmentation inference_segmentation(const Trimap& t, int px, double sigma) {
    if (px < 0) throw std::invalid_argument("inference_segmentation: negative erosion");
    BinaryMask m = erode(trimap_fg_or_unknown(t), px);
    return mask_to_softseg(m, sigma);
}

Trimap pseudo_trimap_real(const BinaryMask& seg, int fg_px, int bg_px) {
    if (fg_px < 0 || bg_px < 0)
        throw std::invalid_argument("pseudo_trimap_real: negative erosion radius");
    BinaryMask fg = erode(seg, fg_px);
    BinaryMask bg = erode(mask_not(seg), bg_px);
    Trimap t(seg.width(), seg.height(), TrimapLabel::Unknown);
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (fg[i])
            t[i] = TrimapLabel::Foreground;
        else if (bg[i])
            t[i] = TrimapLabel::Background;
    }
    return t;
}

Grid<std::uint8_t> trimap_encode(const Trimap& t) {
    Grid<std::uint8_t> out(t.width(), t.height());
    for (std::size_t i = 0; i < t.size(); ++i) {
        switch (t[i]) {
            case TrimapLabel::Background: out[i] = 0; break;
            case TrimapLabel::Unknown: out[i] = 128; break;
            case TrimapLabel::Foreground: out[i] = 255; break;
        }
    }
    return out;
}

Trimap trimap_decode(const Grid<std::uint8_t>& map) {
    Trimap t(map.width(), map.height());
    for (std::size_t i = 0; i < map.size(); ++i) {
        std::uint8_t v = map[i];
        if (v == 0)
            t[i] = TrimapLabel::Background;
        else if (v >= 120 && v <= 136)
            t[i] = TrimapLabel::Unknown;
        else if (v == 255)
            t[i] = TrimapLabel::Foreground;
        else
            throw std::invalid_argument("trimap_decode: pixel value " + std::to_string(v) +
                                        " outside the {0}, [120,136], {255} bands");
    }
    return t;
}

}  // namespace matte
