#include "matte/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "matte/rng.hpp"

namespace matte {

ImageRGB composite(const ImageRGB& fg, const ImageRGB& bg, const AlphaMatte& alpha) {
    if (!fg.same_extent(bg) || fg.width() != alpha.width() || fg.height() != alpha.height())
        throw std::invalid_argument("composite: extent mismatch");
    ImageRGB out(fg.width(), fg.height());
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& f = fg.channel(c).cells();
        const auto& b = bg.channel(c).cells();
        auto& o = out.channel(c).cells();
        for (std::size_t i = 0; i < o.size(); ++i) {
            double a = alpha[i];
            o[i] = std::clamp(a * f[i] + (1.0 - a) * b[i], 0.0, 1.0);
        }
    }
    return out;
}

namespace {

double sample_bilinear(const RealMap& src, double x, double y) {
    double mx = static_cast<double>(src.width() - 1);
    double my = static_cast<double>(src.height() - 1);
    x = std::clamp(x, 0.0, mx);
    y = std::clamp(y, 0.0, my);
    std::size_t x0 = static_cast<std::size_t>(x);
    std::size_t y0 = static_cast<std::size_t>(y);
    std::size_t x1 = std::min(x0 + 1, src.width() - 1);
    std::size_t y1 = std::min(y0 + 1, src.height() - 1);
    double tx = x - static_cast<double>(x0);
    double ty = y - static_cast<double>(y0);
    return (1 - ty) * ((1 - tx) * src.at(x0, y0) + tx * src.at(x1, y0)) +
           ty * ((1 - tx) * src.at(x0, y1) + tx * src.at(x1, y1));
}

}  // namespace

ImageRGB resize_bilinear(const ImageRGB& src, std::size_t new_width, std::size_t new_height) {
    if (new_width == 0 || new_height == 0)
        throw std::invalid_argument("resize_bilinear: target extent must be positive");
    if (src.width() == 0 || src.height() == 0)
        throw std::invalid_argument("resize_bilinear: empty source");
    ImageRGB out(new_width, new_height);
    double sx = static_cast<double>(src.width()) / static_cast<double>(new_width);
    double sy = static_cast<double>(src.height()) / static_cast<double>(new_height);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < new_height; ++y)
            for (std::size_t x = 0; x < new_width; ++x) {
                double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
                double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
                out.channel(c).at(x, y) =
                    std::clamp(sample_bilinear(src.channel(c), src_x, src_y), 0.0, 1.0);
            }
    return out;
}

ImageRGB crop(const ImageRGB& src, const CropRect& rect) {
    if (rect.x + rect.width > src.width() || rect.y + rect.height > src.height())
        throw std::invalid_argument("crop: rectangle exceeds source extent");
    ImageRGB out(rect.width, rect.height);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < rect.height; ++y)
            for (std::size_t x = 0; x < rect.width; ++x)
                out.channel(c).at(x, y) = src.channel(c).at(rect.x + x, rect.y + y);
    return out;
}

ImageRGB fit_background(const ImageRGB& bg, std::size_t target_width,
                        std::size_t target_height, CropRect* crop_out) {
    if (bg.width() == 0 || bg.height() == 0)
        throw std::invalid_argument("fit_background: empty background");
    double scale = std::max(
        static_cast<double>(target_width) / static_cast<double>(bg.width()),
        static_cast<double>(target_height) / static_cast<double>(bg.height()));
    std::size_t sw = std::max<std::size_t>(
        target_width, static_cast<std::size_t>(std::ceil(bg.width() * scale)));
    std::size_t sh = std::max<std::size_t>(
        target_height, static_cast<std::size_t>(std::ceil(bg.height() * scale)));
    ImageRGB scaled = (sw == bg.width() && sh == bg.height())
                          ? bg
                          : resize_bilinear(bg, sw, sh);
    CropRect rect{(sw - target_width) / 2, (sh - target_height) / 2, target_width,
                  target_height};
    if (crop_out) *crop_out = rect;
    return crop(scaled, rect);
}

std::vector<SynthItem> synthesize_set(const std::vector<NamedImage>& fgs,
                                      const std::vector<NamedAlpha>& alphas,
                                      const std::vector<NamedImage>& bgs, std::size_t per_fg,
                                      std::uint64_t seed) {
    if (per_fg < 1) throw std::invalid_argument("synthesize_set: per_fg must be >= 1");
    if (fgs.empty() || bgs.empty() || alphas.size() != fgs.size())
        throw std::invalid_argument(
            "synthesize_set: foregrounds and alphas must pair 1:1 and backgrounds be non-empty");
    for (std::size_t i = 0; i < fgs.size(); ++i) {
        if (fgs[i].image.width() != alphas[i].alpha.width() ||
            fgs[i].image.height() != alphas[i].alpha.height())
            throw std::invalid_argument("synthesize_set: extent mismatch between foreground '" +
                                        fgs[i].name + "' and alpha '" + alphas[i].name + "'");
    }
    std::vector<SynthItem> items;
    items.reserve(fgs.size() * per_fg);
    for (std::size_t i = 0; i < fgs.size(); ++i) {
        for (std::size_t k = 0; k < per_fg; ++k) {
            std::size_t job_index = i * per_fg + k;
            std::size_t bg_index = job_index % bgs.size();
            std::uint64_t item_seed = Rng::derive(seed, job_index);
            CropRect rect;
            ImageRGB bg_fit =
                fit_background(bgs[bg_index].image, fgs[i].image.width(),
                               fgs[i].image.height(), &rect);
            SynthItem item;
            item.image = composite(fgs[i].image, bg_fit, alphas[i].alpha);
            item.alpha = alphas[i].alpha;
            item.provenance = Provenance{fgs[i].name, alphas[i].name, bgs[bg_index].name, rect,
                                         item_seed};
            items.push_back(std::move(item));
        }
    }
    return items;
}

}  // namespace matte
