#pragma once

#include <cstdint>

#include "matte/grid.hpp"
#include "matte/tensor.hpp"

namespace matte {

/// Region a query pixel belongs to when weighting its attention row.
enum class RegionMembership { Unknown, Known };

struct AttentionConfig {
    std::size_t image_channels = 0;  // d
    std::size_t alpha_channels = 0;  // c_a
    std::size_t embed_channels = 0;  // e, width of the query/key embedding
    std::size_t value_channels = 0;  // output channels of the value projection
    std::size_t ratio = 4;           // r, key/value downscale ratio
    std::size_t downscale_kernel = 0;  // 0 selects kernel r x r
    double dropout_rate = 0.1;
    std::uint64_t seed = 0;
    /// Default places dropout on the aggregated context before the output
    /// projection; true moves it after.
    bool dropout_after_projection = false;

    static AttentionConfig defaults(std::size_t d, std::size_t c_a, std::size_t r = 4);
    std::size_t kernel() const { return downscale_kernel == 0 ? ratio : downscale_kernel; }
    void validate() const;
};

/// The four convolutions of the block: query embedding (1x1), key embedding
/// (strided), value projection (strided) and the output projection (1x1).
struct AttentionParams {
    Tensor query_w, key_w, value_w, out_w;
    std::optional<Tensor> query_b, key_b, value_b, out_b;

    /// Query/key/value weights drawn uniformly from [-s, s]; the output
    /// projection starts at zero so the block begins as the identity.
    static AttentionParams init(const AttentionConfig& cfg, std::uint64_t seed);

    std::vector<Tensor> all_tensors() const;
    std::size_t scalar_count() const;
};

/// clip(sqrt(|U|/|K|)) for unknown queries, clip(sqrt(|K|/|U|)) for known
/// ones; counts are clamped to >= 1 and the clip bounds are [0.1, 10].
double region_weight(std::size_t u_count, std::size_t k_count, RegionMembership membership);

/// Block-majority downscale of the unknown mask: a block is unknown iff at
/// least half of its r x r pixels are unknown.
BinaryMask downsample_mask(const BinaryMask& unknown, std::size_t r);

struct AttentionResult {
    Tensor alpha_out;  // [c_a, H, W]
    Tensor attention;  // [H*W, (H/r)*(W/r)], rows sum to 1
};

/// Non-local aggregation of the alpha feature guided by image-feature
/// similarity: per query, softmax(w * <theta(I)_q, phi(I)_p> / sqrt(d/2))
/// weights over downscaled positions aggregate the projected alpha feature,
/// and the result is added back through the output projection.
AttentionResult attention_forward(Tape& tape, const Tensor& image_feature,
                                  const Tensor& alpha_feature, const BinaryMask& unknown,
                                  const AttentionParams& params, const AttentionConfig& cfg,
                                  DropoutMode mode);

}  // namespace matte
