#pragma once

#include <cstdint>

#include "matte/grid.hpp"

namespace matte {

enum class TrimapLabel : std::uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

using Trimap = Grid<TrimapLabel>;

/// Per-pixel class probabilities; bg + unk + fg = 1 within tolerance.
struct TrimapProbs {
    RealMap bg, unk, fg;

    std::size_t width() const { return bg.width(); }
    std::size_t height() const { return bg.height(); }
};

/// Two-channel soft foreground segmentation; fg_prob + bg_prob = 1.
struct SoftSegmentation {
    RealMap fg_prob, bg_prob;

    std::size_t width() const { return fg_prob.width(); }
    std::size_t height() const { return fg_prob.height(); }
};

/// Alpha binarization threshold: 1/255, the granularity of 8-bit storage.
inline constexpr double kAlphaEpsilon = 1.0 / 255.0;

/// Thresholds alpha at (eps, 1-eps) and erodes foreground and background by
/// the given radii; everything else is unknown.
Trimap trimap_from_alpha(const AlphaMatte& alpha, int fg_erosion_px, int bg_erosion_px);

/// Ground-truth recipe: equal erosion on both sides (default 15 px).
Trimap gt_trimap(const AlphaMatte& alpha, int erosion_px = 15);

/// Training-time recipe: independent erosion radii drawn uniformly from
/// [1, 29] for foreground and background.
Trimap random_trimap(const AlphaMatte& alpha, std::uint64_t seed);

BinaryMask trimap_mask(const Trimap& t, TrimapLabel label);
BinaryMask trimap_fg_or_unknown(const Trimap& t);

enum class SoftSegOps {
    /// Erode then dilate the fg+unknown mask (the default reading of the
    /// "sequential" recipe).
    Open,
    /// Apply only one of the two operations, chosen by a coin flip.
    EitherSingle,
};

/// Deterministic core of the soft-segmentation recipe with explicit draws.
/// For EitherSingle, `use_dilate` selects the applied operation and only
/// `erode_px` (or `dilate_px`) is used.
SoftSegmentation soft_segmentation_core(const Trimap& t, int erode_px, int dilate_px,
                                        double sigma, SoftSegOps ops = SoftSegOps::Open,
                                        bool use_dilate = false);

/// Training-time recipe: erode/dilate radii uniform in [1, 59], blur sigma
/// uniform in [1, 3].
SoftSegmentation soft_segmentation_from_trimap(const Trimap& t, std::uint64_t seed,
                                               SoftSegOps ops = SoftSegOps::Open);

/// Inference-time recipe: erode fg+unknown by `px` (default 20) and blur.
/// sigma = 0 skips the blur.
SoftSegmentation inference_segmentation(const Trimap& t, int px = 20, double sigma = 1.0);

/// Real-data recipe: foreground from eroding the segmentation, background
/// from eroding its complement.
Trimap pseudo_trimap_real(const BinaryMask& seg, int fg_px = 15, int bg_px = 50);

/// 8-bit encoding: BG=0, UNK=128, FG=255.
Grid<std::uint8_t> trimap_encode(const Trimap& t);

/// Decoding accepts the bands {0}, [120,136], {255}; anything else throws.
Trimap trimap_decode(const Grid<std::uint8_t>& map);

}  // namespace matte
