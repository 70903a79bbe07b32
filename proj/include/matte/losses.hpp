#pragma once

#include <cstdint>
#include <span>

#include "matte/grid.hpp"
#include "matte/tensor.hpp"
#include "matte/trimap.hpp"

namespace matte {

struct LossReport {
    double l_alpha = 0.0;
    double l_hard = 0.0;
    double total = 0.0;
    std::size_t hard_pixel_count = 0;
    std::size_t mask_pixel_count = 0;
};

/// Number of hard-mined pixels for a mask of `mask_pixels` at percentage p.
std::size_t hard_pixel_count(std::size_t mask_pixels, double p);

/// Mean absolute difference over the mask.
double l_alpha(const RealMap& pred, const RealMap& gt, const BinaryMask& mask);

/// Mean absolute difference over the top-p% largest-error pixels of the
/// mask (ties broken by lower pixel index). p defaults to 50.
double l_hard(const RealMap& pred, const RealMap& gt, const BinaryMask& mask, double p = 50.0);

LossReport alpha_loss_report(const RealMap& pred, const RealMap& gt, const BinaryMask& mask,
                             double p = 50.0);

/// Sum of (l_alpha + l_hard) over the coarse and refined predictions.
LossReport total_loss(const RealMap& coarse, const RealMap& refined, const RealMap& gt,
                      const BinaryMask& mask, double p = 50.0);

// Differentiable variants operating on [H,W] or [1,H,W] tensors.
Tensor l_alpha_t(Tape& tape, const Tensor& pred, const RealMap& gt, const BinaryMask& mask);
Tensor l_hard_t(Tape& tape, const Tensor& pred, const RealMap& gt, const BinaryMask& mask,
                double p = 50.0);
Tensor total_loss_t(Tape& tape, const Tensor& coarse, const Tensor& refined, const RealMap& gt,
                    const BinaryMask& mask, double p = 50.0, LossReport* report = nullptr);

/// Mean over pixels of -log softmax(logits)[label]; logits are [3,H,W] in
/// (background, unknown, foreground) class order.
Tensor cross_entropy_3class(Tape& tape, const Tensor& logits, const Trimap& labels);
double cross_entropy_3class(const Tensor& logits, const Trimap& labels);

/// Least-squares GAN objectives.
double lsgan_generator_loss(std::span<const double> d_on_composite, double lambda, double l_ce,
                            double l_coarse, double l_refined);
double lsgan_discriminator_loss(std::span<const double> d_on_fake,
                                std::span<const double> d_on_real);

struct GanLambda {
    double base = 0.5;
    std::size_t halving_period = 10000;
};

/// base * 2^-floor(iter / period).
double lambda_schedule(std::size_t iter, const GanLambda& g = {});

}  // namespace matte
