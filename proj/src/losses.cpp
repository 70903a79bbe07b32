#include "matte/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace matte {

namespace {

std::vector<std::size_t> mask_indices(const BinaryMask& mask) {
    std::vector<std::size_t> idx;
    idx.reserve(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(i);
    return idx;
}

void require_extents(const RealMap& pred, const RealMap& gt, const BinaryMask& mask,
                     const char* what) {
    if (!pred.same_extent(gt) || pred.width() != mask.width() ||
        pred.height() != mask.height())
        throw std::invalid_argument(std::string(what) + ": extent mismatch");
}

// Indices of the top-p% largest |pred-gt| within the mask, ties resolved
// toward the lower pixel index.
std::vector<std::size_t> hard_indices(const std::vector<double>& errors,
                                      const std::vector<std::size_t>& masked, double p) {
    std::vector<std::size_t> order(masked.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (errors[a] != errors[b]) return errors[a] > errors[b];
        return masked[a] < masked[b];
    });
    std::size_t take = hard_pixel_count(masked.size(), p);
    std::vector<std::size_t> out(take);
    for (std::size_t i = 0; i < take; ++i) out[i] = masked[order[i]];
    return out;
}

}  // namespace

std::size_t hard_pixel_count(std::size_t mask_pixels, double p) {
    if (p <= 0.0 || p > 100.0)
        throw std::invalid_argument("hard_pixel_count: p must be in (0, 100]");
    auto take = static_cast<std::size_t>(std::floor(p / 100.0 * mask_pixels));
    return std::max<std::size_t>(take, 1);
}

double l_alpha(const RealMap& pred, const RealMap& gt, const BinaryMask& mask) {
    require_extents(pred, gt, mask, "l_alpha");
    auto idx = mask_indices(mask);
    if (idx.empty()) throw std::invalid_argument("l_alpha: empty mask");
    double s = 0.0;
    for (auto i : idx) s += std::abs(pred[i] - gt[i]);
    return s / static_cast<double>(idx.size());
}

double l_hard(const RealMap& pred, const RealMap& gt, const BinaryMask& mask, double p) {
    require_extents(pred, gt, mask, "l_hard");
    auto masked = mask_indices(mask);
    if (masked.empty()) throw std::invalid_argument("l_hard: empty mask");
    std::vector<double> errors(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i)
        errors[i] = std::abs(pred[masked[i]] - gt[masked[i]]);
    auto hard = hard_indices(errors, masked, p);
    double s = 0.0;
    for (auto i : hard) s += std::abs(pred[i] - gt[i]);
    return s / static_cast<double>(hard.size());
}

LossReport alpha_loss_report(const RealMap& pred, const RealMap& gt, const BinaryMask& mask,
                             double p) {
    LossReport r;
    r.l_alpha = l_alpha(pred, gt, mask);
    r.l_hard = l_hard(pred, gt, mask, p);
    r.total = r.l_alpha + r.l_hard;
    r.mask_pixel_count = count_true(mask);
    r.hard_pixel_count = hard_pixel_count(r.mask_pixel_count, p);
    return r;
}

LossReport total_loss(const RealMap& coarse, const RealMap& refined, const RealMap& gt,
                      const BinaryMask& mask, double p) {
    LossReport c = alpha_loss_report(coarse, gt, mask, p);
    LossReport f = alpha_loss_report(refined, gt, mask, p);
    LossReport r;
    r.l_alpha = c.l_alpha + f.l_alpha;
    r.l_hard = c.l_hard + f.l_hard;
    r.total = r.l_alpha + r.l_hard;
    r.mask_pixel_count = c.mask_pixel_count;
    r.hard_pixel_count = c.hard_pixel_count;
    return r;
}

namespace {

RealMap tensor_as_map(const Tensor& t, const char* what) {
    Shape s = t.shape();
    std::size_t h = 0, w = 0;
    if (s.size() == 2) {
        h = s[0];
        w = s[1];
    } else if (s.size() == 3 && s[0] == 1) {
        h = s[1];
        w = s[2];
    } else {
        throw std::invalid_argument(std::string(what) +
                                    ": prediction tensor must be [H,W] or [1,H,W]");
    }
    RealMap m(w, h);
    m.cells() = t.values();
    return m;
}

Tensor masked_mean_abs_diff(Tape& tape, const Tensor& pred, const RealMap& gt,
                            const std::vector<std::size_t>& indices) {
    std::vector<double> gt_v(pred.numel(), 0.0);
    std::vector<double> mask_v(pred.numel(), 0.0);
    for (auto i : indices) {
        gt_v[i] = gt[i];
        mask_v[i] = 1.0;
    }
    Tensor gt_t(pred.shape(), std::move(gt_v), false);
    Tensor mask_t(pred.shape(), std::move(mask_v), false);
    Tensor diff = abs_value(tape, sub(tape, pred, gt_t));
    Tensor masked = mul(tape, diff, mask_t);
    return scale(tape, sum(tape, masked), 1.0 / static_cast<double>(indices.size()));
}

}  // namespace

Tensor l_alpha_t(Tape& tape, const Tensor& pred, const RealMap& gt, const BinaryMask& mask) {
    RealMap pv = tensor_as_map(pred, "l_alpha_t");
    require_extents(pv, gt, mask, "l_alpha_t");
    auto idx = mask_indices(mask);
    if (idx.empty()) throw std::invalid_argument("l_alpha_t: empty mask");
    return masked_mean_abs_diff(tape, pred, gt, idx);
}

Tensor l_hard_t(Tape& tape, const Tensor& pred, const RealMap& gt, const BinaryMask& mask,
                double p) {
    RealMap pv = tensor_as_map(pred, "l_hard_t");
    require_extents(pv, gt, mask, "l_hard_t");
    auto masked = mask_indices(mask);
    if (masked.empty()) throw std::invalid_argument("l_hard_t: empty mask");
    std::vector<double> errors(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i)
        errors[i] = std::abs(pv[masked[i]] - gt[masked[i]]);
    auto hard = hard_indices(errors, masked, p);
    return masked_mean_abs_diff(tape, pred, gt, hard);
}

Tensor total_loss_t(Tape& tape, const Tensor& coarse, const Tensor& refined, const RealMap& gt,
                    const BinaryMask& mask, double p, LossReport* report) {
    Tensor la_c = l_alpha_t(tape, coarse, gt, mask);
    Tensor lh_c = l_hard_t(tape, coarse, gt, mask, p);
    Tensor la_r = l_alpha_t(tape, refined, gt, mask);
    Tensor lh_r = l_hard_t(tape, refined, gt, mask, p);
    Tensor total = add(tape, add(tape, la_c, lh_c), add(tape, la_r, lh_r));
    if (report) {
        report->l_alpha = la_c.item() + la_r.item();
        report->l_hard = lh_c.item() + lh_r.item();
        report->total = total.item();
        report->mask_pixel_count = count_true(mask);
        report->hard_pixel_count = hard_pixel_count(report->mask_pixel_count, p);
    }
    return total;
}

namespace {

// Fused log-softmax cross-entropy; backward is (softmax - onehot) / N.
Tensor cross_entropy_impl(Tape& tape, const Tensor& logits, const Trimap& labels) {
    if (logits.rank() != 3 || logits.shape()[0] != 3)
        throw std::invalid_argument("cross_entropy_3class: logits must be [3,H,W]");
    std::size_t h = logits.shape()[1], w = logits.shape()[2];
    if (labels.width() != w || labels.height() != h)
        throw std::invalid_argument("cross_entropy_3class: extent mismatch");
    std::size_t n = h * w;
    const auto& v = logits.values();
    std::vector<double> probs(3 * n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a = v[i], b = v[n + i], c = v[2 * n + i];
        double mx = std::max({a, b, c});
        double ea = std::exp(a - mx), eb = std::exp(b - mx), ec = std::exp(c - mx);
        double denom = ea + eb + ec;
        probs[i] = ea / denom;
        probs[n + i] = eb / denom;
        probs[2 * n + i] = ec / denom;
        auto label = static_cast<std::size_t>(labels[i]);
        loss -= std::log(probs[label * n + i]);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss))
        throw std::domain_error("cross_entropy_3class: non-finite value in result");
    Tensor y = Tensor::scalar(loss, logits.requires_grad());
    if (y.requires_grad()) {
        tape.record([logits, y, labels, probs = std::move(probs), n] {
            double g = y.grad()[0] / static_cast<double>(n);
            auto& gx = logits.grad();
            for (std::size_t i = 0; i < n; ++i) {
                auto label = static_cast<std::size_t>(labels[i]);
                for (std::size_t c = 0; c < 3; ++c) {
                    double target = c == label ? 1.0 : 0.0;
                    gx[c * n + i] += g * (probs[c * n + i] - target);
                }
            }
        });
    }
    return y;
}

}  // namespace

Tensor cross_entropy_3class(Tape& tape, const Tensor& logits, const Trimap& labels) {
    return cross_entropy_impl(tape, logits, labels);
}

double cross_entropy_3class(const Tensor& logits, const Trimap& labels) {
    Tape scratch;
    return cross_entropy_impl(scratch, logits, labels).item();
}

double lsgan_generator_loss(std::span<const double> d_on_composite, double lambda, double l_ce,
                            double l_coarse, double l_refined) {
    if (lambda < 0.0) throw std::invalid_argument("lsgan_generator_loss: lambda must be >= 0");
    double adv = 0.0;
    for (double d : d_on_composite) adv += (d - 1.0) * (d - 1.0);
    if (!d_on_composite.empty()) adv /= static_cast<double>(d_on_composite.size());
    return adv + lambda * (l_ce + l_coarse + l_refined);
}

double lsgan_discriminator_loss(std::span<const double> d_on_fake,
                                std::span<const double> d_on_real) {
    double fake = 0.0, real = 0.0;
    for (double d : d_on_fake) fake += d * d;
    if (!d_on_fake.empty()) fake /= static_cast<double>(d_on_fake.size());
    for (double d : d_on_real) real += (d - 1.0) * (d - 1.0);
    if (!d_on_real.empty()) real /= static_cast<double>(d_on_real.size());
    return fake + real;
}

double lambda_schedule(std::size_t iter, const GanLambda& g) {
    if (g.halving_period == 0)
        throw std::invalid_argument("lambda_schedule: halving period must be positive");
    return g.base * std::pow(2.0, -static_cast<double>(iter / g.halving_period));
}

}  // namespace matte
