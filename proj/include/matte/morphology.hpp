#pragma once

#include "matte/grid.hpp"

namespace matte {

/// Square (Chebyshev) structuring element of radius k; the (2k+1)x(2k+1)
/// window. k = 0 is the identity for erode/dilate.
struct StructuringElement {
    int radius = 0;
};

/// Pixel value assumed for coordinates outside the image.
enum class BorderAssume { False, True };

/// Pixel is true iff every pixel within Chebyshev distance k is true.
/// Out-of-image pixels count as `outside` (false by default, which shrinks
/// the mask at the image border).
BinaryMask erode(const BinaryMask& m, int k, BorderAssume outside = BorderAssume::False);

/// Pixel is true iff any pixel within Chebyshev distance k is true.
BinaryMask dilate(const BinaryMask& m, int k);

/// Separable Gaussian blur, kernel radius ceil(3*sigma), mirrored borders
/// (reflect-101). Output of an input in [0,1] stays in [0,1].
RealMap gaussian_blur(const RealMap& img, double sigma);

}  // namespace matte
