#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matte/grid.hpp"

namespace matte {

struct CropRect {
    std::size_t x = 0, y = 0, width = 0, height = 0;
};

/// One composition task: which foreground/alpha/background to combine, the
/// background crop, and the per-item seed.
struct CompositionJob {
    std::size_t fg_index = 0;
    std::size_t alpha_index = 0;
    std::size_t bg_index = 0;
    CropRect crop;
    std::size_t target_width = 0, target_height = 0;
    std::uint64_t seed = 0;
};

struct Provenance {
    std::string fg, alpha, bg;
    CropRect crop;
    std::uint64_t seed = 0;
};

struct SynthItem {
    ImageRGB image;
    AlphaMatte alpha;
    Provenance provenance;
};

struct NamedImage {
    std::string name;
    ImageRGB image;
};

struct NamedAlpha {
    std::string name;
    AlphaMatte alpha;
};

/// Per pixel and channel: I = alpha*F + (1-alpha)*B, clamped to [0,1].
ImageRGB composite(const ImageRGB& fg, const ImageRGB& bg, const AlphaMatte& alpha);

ImageRGB resize_bilinear(const ImageRGB& src, std::size_t new_width, std::size_t new_height);
ImageRGB crop(const ImageRGB& src, const CropRect& rect);

/// Scales the background up to cover the target extent (bilinear), then
/// takes the centered crop. Returns the crop applied at scaled resolution.
ImageRGB fit_background(const ImageRGB& bg, std::size_t target_width,
                        std::size_t target_height, CropRect* crop_out = nullptr);

/// Composites every foreground against `per_fg` backgrounds cycling through
/// the background list. Deterministic under `seed`; per-item seeds are
/// derived from (seed, item index).
std::vector<SynthItem> synthesize_set(const std::vector<NamedImage>& fgs,
                                      const std::vector<NamedAlpha>& alphas,
                                      const std::vector<NamedImage>& bgs, std::size_t per_fg,
                                      std::uint64_t seed);

}  // namespace matte
