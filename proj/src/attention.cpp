#include "matte/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "matte/rng.hpp"

namespace matte {

AttentionConfig AttentionConfig::defaults(std::size_t d, std::size_t c_a, std::size_t r) {
    AttentionConfig cfg;
    cfg.image_channels = d;
    cfg.alpha_channels = c_a;
    cfg.embed_channels = std::max<std::size_t>(1, d / 2);
    cfg.value_channels = c_a;
    cfg.ratio = r;
    return cfg;
}

void AttentionConfig::validate() const {
    if (image_channels < 1 || alpha_channels < 1 || embed_channels < 1 || value_channels < 1)
        throw std::invalid_argument("AttentionConfig: channel counts must be >= 1");
    if (ratio < 1) throw std::invalid_argument("AttentionConfig: ratio must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("AttentionConfig: dropout rate must be in [0, 1)");
}

AttentionParams AttentionParams::init(const AttentionConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    auto uniform = [&](Shape shape, double s) {
        std::vector<double> v(shape_numel(shape));
        for (auto& x : v) x = rng.next_range(-s, s);
        return Tensor(std::move(shape), std::move(v), true);
    };
    std::size_t k = cfg.kernel();
    double qs = 1.0 / std::sqrt(static_cast<double>(cfg.image_channels));
    double vs = 1.0 / std::sqrt(static_cast<double>(cfg.alpha_channels * k * k));
    AttentionParams p;
    p.query_w = uniform({cfg.embed_channels, cfg.image_channels, 1, 1}, qs);
    p.key_w = uniform({cfg.embed_channels, cfg.image_channels, k, k},
                      1.0 / std::sqrt(static_cast<double>(cfg.image_channels * k * k)));
    p.value_w = uniform({cfg.value_channels, cfg.alpha_channels, k, k}, vs);
    p.out_w = Tensor::zeros({cfg.alpha_channels, cfg.value_channels, 1, 1}, true);
    return p;
}

std::vector<Tensor> AttentionParams::all_tensors() const {
    std::vector<Tensor> out{query_w, key_w, value_w, out_w};
    for (const auto& b : {query_b, key_b, value_b, out_b})
        if (b) out.push_back(*b);
    return out;
}

std::size_t AttentionParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : all_tensors()) n += t.numel();
    return n;
}

double region_weight(std::size_t u_count, std::size_t k_count, RegionMembership membership) {
    double u = static_cast<double>(std::max<std::size_t>(u_count, 1));
    double k = static_cast<double>(std::max<std::size_t>(k_count, 1));
    double ratio = membership == RegionMembership::Unknown ? u / k : k / u;
    return std::clamp(std::sqrt(ratio), 0.1, 10.0);
}

BinaryMask downsample_mask(const BinaryMask& unknown, std::size_t r) {
    if (r < 1) throw std::invalid_argument("downsample_mask: ratio must be >= 1");
    if (r == 1) return unknown;
    if (unknown.width() % r != 0 || unknown.height() % r != 0)
        throw std::invalid_argument("downsample_mask: ratio must divide mask extents");
    std::size_t ow = unknown.width() / r, oh = unknown.height() / r;
    BinaryMask out(ow, oh);
    for (std::size_t by = 0; by < oh; ++by)
        for (std::size_t bx = 0; bx < ow; ++bx) {
            std::size_t count = 0;
            for (std::size_t dy = 0; dy < r; ++dy)
                for (std::size_t dx = 0; dx < r; ++dx)
                    count += unknown.at(bx * r + dx, by * r + dy) != 0;
            out.at(bx, by) = 2 * count >= r * r;
        }
    return out;
}

AttentionResult attention_forward(Tape& tape, const Tensor& image_feature,
                                  const Tensor& alpha_feature, const BinaryMask& unknown,
                                  const AttentionParams& params, const AttentionConfig& cfg,
                                  DropoutMode mode) {
    cfg.validate();
    if (image_feature.rank() != 3 || alpha_feature.rank() != 3)
        throw std::invalid_argument("attention_forward: features must be [c,H,W]");
    std::size_t d = image_feature.shape()[0];
    std::size_t h = image_feature.shape()[1];
    std::size_t w = image_feature.shape()[2];
    if (d != cfg.image_channels)
        throw std::invalid_argument("attention_forward: image feature channels mismatch");
    if (alpha_feature.shape()[0] != cfg.alpha_channels ||
        alpha_feature.shape()[1] != h || alpha_feature.shape()[2] != w)
        throw std::invalid_argument("attention_forward: alpha feature extent mismatch");
    if (unknown.width() != w || unknown.height() != h)
        throw std::invalid_argument("attention_forward: unknown mask extent mismatch");
    std::size_t r = cfg.ratio;
    if (h % r != 0 || w % r != 0)
        throw std::invalid_argument("attention_forward: ratio must divide feature extents");

    std::size_t hw = h * w;
    std::size_t ph = h / r, pw = w / r;
    std::size_t p_count = ph * pw;

    // per-query region weights from the mask at key resolution
    BinaryMask down = downsample_mask(unknown, r);
    std::size_t u_count = count_true(down);
    std::size_t k_count = down.size() - u_count;
    std::vector<double> row_weights(hw);
    for (std::size_t i = 0; i < hw; ++i)
        row_weights[i] = region_weight(
            u_count, k_count,
            unknown[i] ? RegionMembership::Unknown : RegionMembership::Known);

    Tensor queries = conv2d(tape, image_feature, params.query_w, params.query_b, 1, 0);
    Tensor keys = conv2d(tape, image_feature, params.key_w, params.key_b, r, 0);
    Tensor vals = conv2d(tape, alpha_feature, params.value_w, params.value_b, r, 0);
    if (keys.shape()[1] != ph || keys.shape()[2] != pw)
        throw std::invalid_argument("attention_forward: downscale kernel does not tile extents");

    std::size_t e = cfg.embed_channels;
    Tensor q_mat = transpose(tape, reshape(tape, queries, {e, hw}));        // [HW, e]
    Tensor k_mat = reshape(tape, keys, {e, p_count});                       // [e, P]
    Tensor logits = matmul(tape, q_mat, k_mat);                             // [HW, P]
    logits = scale(tape, logits, 1.0 / std::sqrt(static_cast<double>(d) / 2.0));
    logits = row_scale(tape, logits, row_weights);
    Tensor attn = row_softmax(tape, logits);

    Tensor v_mat = transpose(tape, reshape(tape, vals, {cfg.value_channels, p_count}));
    Tensor context = transpose(tape, matmul(tape, attn, v_mat));            // [c_v, HW]
    context = reshape(tape, context, {cfg.value_channels, h, w});

    Tensor projected;
    if (cfg.dropout_after_projection) {
        projected = conv2d(tape, context, params.out_w, params.out_b, 1, 0);
        projected = dropout(tape, projected, cfg.dropout_rate, mode, cfg.seed);
    } else {
        Tensor dropped = dropout(tape, context, cfg.dropout_rate, mode, cfg.seed);
        projected = conv2d(tape, dropped, params.out_w, params.out_b, 1, 0);
    }

    AttentionResult result;
    result.alpha_out = add(tape, alpha_feature, projected);
    result.attention = attn;
    return result;
}

}  // namespace matte
