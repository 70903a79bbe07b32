#include "matte/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "matte/rng.hpp"

namespace matte {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_finite(std::span<const double> v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x))
            throw std::domain_error(std::string(op) + ": non-finite value in result");
    }
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    auto st = std::make_shared<Storage>();
    st->numel = shape_numel(shape);
    if (st->numel != values.size())
        throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    st->shape = std::move(shape);
    st->values = std::move(values);
    st->requires_grad = requires_grad;
    storage_ = std::move(st);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return storage_->shape; }
std::size_t Tensor::numel() const { return storage_->numel; }
bool Tensor::requires_grad() const { return storage_->requires_grad; }
const std::vector<double>& Tensor::values() const { return storage_->values; }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
    return storage_->values[0];
}

std::vector<double>& Tensor::mutable_values() const { return storage_->values; }

bool Tensor::has_grad() const { return !storage_->grad.empty(); }

std::vector<double>& Tensor::grad() const {
    if (storage_->grad.empty()) storage_->grad.assign(storage_->numel, 0.0);
    return storage_->grad;
}

void Tensor::zero_grad() const {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) const {
    auto& dst = grad();
    if (g.size() != dst.size())
        throw std::invalid_argument("accumulate_grad: size mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Tape::backward(const Tensor& output) {
    if (output.numel() != 1)
        throw std::invalid_argument("Tape::backward: output must be scalar");
    output.grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

Tensor tensor_from_values(const Shape& shape, std::span<const double> values,
                          bool requires_grad) {
    return Tensor(shape, std::vector<double>(values.begin(), values.end()), requires_grad);
}

// ---- elementwise ops ------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    check_finite(out, "add");
    Tensor y(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    if (y.requires_grad()) {
        tape.record([a, b, y] {
            const auto& gy = y.grad();
            if (a.requires_grad()) a.accumulate_grad(gy);
            if (b.requires_grad()) b.accumulate_grad(gy);
        });
    }
    return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    check_finite(out, "sub");
    Tensor y(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    if (y.requires_grad()) {
        tape.record([a, b, y] {
            const auto& gy = y.grad();
            if (a.requires_grad()) a.accumulate_grad(gy);
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
            }
        });
    }
    return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    check_finite(out, "mul");
    Tensor y(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    if (y.requires_grad()) {
        tape.record([a, b, y] {
            const auto& gy = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.values()[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a.values()[i];
            }
        });
    }
    return y;
}

Tensor scale(Tape& tape, const Tensor& x, double s) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * s;
    check_finite(out, "scale");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, s] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * s;
        });
    }
    return y;
}

Tensor relu(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.values()[i]);
    check_finite(out, "relu");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i)
                if (x.values()[i] > 0.0) gx[i] += gy[i];
        });
    }
    return y;
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double negative_slope) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = x.values()[i];
        out[i] = v > 0.0 ? v : negative_slope * v;
    }
    check_finite(out, "leaky_relu");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, negative_slope] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i)
                gx[i] += gy[i] * (x.values()[i] > 0.0 ? 1.0 : negative_slope);
        });
    }
    return y;
}

Tensor abs_value(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x.values()[i]);
    check_finite(out, "abs_value");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                double v = x.values()[i];
                // subgradient 0 at v == 0
                gx[i] += gy[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
            }
        });
    }
    return y;
}

Tensor square(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * x.values()[i];
    check_finite(out, "square");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * 2.0 * x.values()[i];
        });
    }
    return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    if (!std::isfinite(s)) throw std::domain_error("sum: non-finite value in result");
    Tensor y = Tensor::scalar(s, x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y] {
            double g = y.grad()[0];
            auto& gx = x.grad();
            for (auto& v : gx) v += g;
        });
    }
    return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
    if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    double m = s / static_cast<double>(x.numel());
    if (!std::isfinite(m)) throw std::domain_error("mean: non-finite value in result");
    Tensor y = Tensor::scalar(m, x.requires_grad());
    if (y.requires_grad()) {
        double inv = 1.0 / static_cast<double>(x.numel());
        tape.record([x, y, inv] {
            double g = y.grad()[0] * inv;
            auto& gx = x.grad();
            for (auto& v : gx) v += g;
        });
    }
    return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) +
                                    " -> " + shape_str(new_shape));
    Tensor y(std::move(new_shape), x.values(), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y] { x.accumulate_grad(y.grad()); });
    }
    return y;
}

Tensor transpose(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose: expected rank-2 tensor");
    std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.values()[i * n + j];
    Tensor y(Shape{n, m}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, m, n] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[j * m + i];
        });
    }
    return y;
}

Tensor concat_channels(Tape& tape, const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    for (const auto& p : parts)
        require(p.rank() == 3, "concat_channels: expected [c,H,W] tensors");
    std::size_t h = parts[0].shape()[1], w = parts[0].shape()[2];
    std::size_t c_total = 0;
    for (const auto& p : parts) {
        require(p.shape()[1] == h && p.shape()[2] == w,
                "concat_channels: spatial extent mismatch");
        c_total += p.shape()[0];
    }
    std::vector<double> out;
    out.reserve(c_total * h * w);
    bool needs_grad = false;
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        needs_grad = needs_grad || p.requires_grad();
    }
    Tensor y(Shape{c_total, h, w}, std::move(out), needs_grad);
    if (needs_grad) {
        tape.record([parts, y] {
            const auto& gy = y.grad();
            std::size_t offset = 0;
            for (const auto& p : parts) {
                if (p.requires_grad())
                    p.accumulate_grad(std::span<const double>(gy.data() + offset, p.numel()));
                offset += p.numel();
            }
        });
    }
    return y;
}

// ---- spatial ops ----------------------------------------------------------

namespace {

void require_chw(const char* op, const Tensor& x) {
    if (x.rank() != 3)
        throw std::invalid_argument(std::string(op) + ": expected [c,H,W], got " +
                                    shape_str(x.shape()));
}

}  // namespace

Tensor upsample_nearest2x(Tape& tape, const Tensor& x) {
    require_chw("upsample_nearest2x", x);
    std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    std::size_t oh = 2 * h, ow = 2 * w;
    std::vector<double> out(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx)
                out[(ch * oh + y) * ow + xx] = x.values()[(ch * h + y / 2) * w + xx / 2];
    Tensor y(Shape{c, oh, ow}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, c, h, w, oh, ow] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t yy = 0; yy < oh; ++yy)
                    for (std::size_t xx = 0; xx < ow; ++xx)
                        gx[(ch * h + yy / 2) * w + xx / 2] += gy[(ch * oh + yy) * ow + xx];
        });
    }
    return y;
}

namespace {

// Half-pixel-center source coordinate for 2x upsampling, clamped to the
// valid range; returns floor index and interpolation weight.
inline void bilinear2x_coord(std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1,
                             double& t) {
    double s = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (s < 0.0) s = 0.0;
    double max_s = static_cast<double>(n - 1);
    if (s > max_s) s = max_s;
    i0 = static_cast<std::size_t>(s);
    i1 = std::min(i0 + 1, n - 1);
    t = s - static_cast<double>(i0);
}

}  // namespace

Tensor upsample_bilinear2x(Tape& tape, const Tensor& x) {
    require_chw("upsample_bilinear2x", x);
    std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    std::size_t oh = 2 * h, ow = 2 * w;
    std::vector<double> out(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            std::size_t y0, y1;
            double ty;
            bilinear2x_coord(oy, h, y0, y1, ty);
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t x0, x1;
                double tx;
                bilinear2x_coord(ox, w, x0, x1, tx);
                double v00 = x.values()[(ch * h + y0) * w + x0];
                double v01 = x.values()[(ch * h + y0) * w + x1];
                double v10 = x.values()[(ch * h + y1) * w + x0];
                double v11 = x.values()[(ch * h + y1) * w + x1];
                out[(ch * oh + oy) * ow + ox] = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                                ty * ((1 - tx) * v10 + tx * v11);
            }
        }
    }
    check_finite(out, "upsample_bilinear2x");
    Tensor y(Shape{c, oh, ow}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, c, h, w, oh, ow] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    std::size_t y0, y1;
                    double ty;
                    bilinear2x_coord(oy, h, y0, y1, ty);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        std::size_t x0, x1;
                        double tx;
                        bilinear2x_coord(ox, w, x0, x1, tx);
                        double g = gy[(ch * oh + oy) * ow + ox];
                        gx[(ch * h + y0) * w + x0] += g * (1 - ty) * (1 - tx);
                        gx[(ch * h + y0) * w + x1] += g * (1 - ty) * tx;
                        gx[(ch * h + y1) * w + x0] += g * ty * (1 - tx);
                        gx[(ch * h + y1) * w + x1] += g * ty * tx;
                    }
                }
            }
        });
    }
    return y;
}

Tensor avg_pool2x(Tape& tape, const Tensor& x) {
    require_chw("avg_pool2x", x);
    std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    require(h % 2 == 0 && w % 2 == 0, "avg_pool2x: extents must be even");
    std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> out(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        s += x.values()[(ch * h + 2 * oy + dy) * w + 2 * ox + dx];
                out[(ch * oh + oy) * ow + ox] = s * 0.25;
            }
    check_finite(out, "avg_pool2x");
    Tensor y(Shape{c, oh, ow}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, c, h, w, oh, ow] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double g = gy[(ch * oh + oy) * ow + ox] * 0.25;
                        for (std::size_t dy = 0; dy < 2; ++dy)
                            for (std::size_t dx = 0; dx < 2; ++dx)
                                gx[(ch * h + 2 * oy + dy) * w + 2 * ox + dx] += g;
                    }
        });
    }
    return y;
}

Tensor max_pool2x(Tape& tape, const Tensor& x) {
    require_chw("max_pool2x", x);
    std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    require(h % 2 == 0 && w % 2 == 0, "max_pool2x: extents must be even");
    std::size_t oh = h / 2, ow = w / 2;
    std::vector<double> out(c * oh * ow);
    std::vector<std::size_t> argmax(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -1e300;
                std::size_t best_idx = 0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        std::size_t idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        // strict > keeps the first maximum, deterministic at ties
                        if (x.values()[idx] > best) {
                            best = x.values()[idx];
                            best_idx = idx;
                        }
                    }
                out[(ch * oh + oy) * ow + ox] = best;
                argmax[(ch * oh + oy) * ow + ox] = best_idx;
            }
    check_finite(out, "max_pool2x");
    Tensor y(Shape{c, oh, ow}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, argmax = std::move(argmax)] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
        });
    }
    return y;
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight,
              const std::optional<Tensor>& bias, std::size_t stride, std::size_t padding) {
    require_chw("conv2d", input);
    if (weight.rank() != 4)
        throw std::invalid_argument("conv2d: weight must be [C_out,C_in,kh,kw], got " +
                                    shape_str(weight.shape()));
    std::size_t c_in = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    std::size_t c_out = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
    require(weight.shape()[1] == c_in, "conv2d: weight C_in " +
                                           std::to_string(weight.shape()[1]) +
                                           " does not match input channels " +
                                           std::to_string(c_in));
    require(kh >= 1 && kw >= 1 && stride >= 1, "conv2d: kernel and stride must be >= 1");
    std::ptrdiff_t oh_s = (static_cast<std::ptrdiff_t>(h) + 2 * padding - kh) / stride + 1;
    std::ptrdiff_t ow_s = (static_cast<std::ptrdiff_t>(w) + 2 * padding - kw) / stride + 1;
    require(static_cast<std::ptrdiff_t>(h) + 2 * static_cast<std::ptrdiff_t>(padding) >=
                    static_cast<std::ptrdiff_t>(kh) &&
                oh_s >= 1 && ow_s >= 1,
            "conv2d: non-positive output extent");
    std::size_t oh = static_cast<std::size_t>(oh_s), ow = static_cast<std::size_t>(ow_s);
    if (bias) {
        require(bias->rank() == 1 && bias->shape()[0] == c_out,
                "conv2d: bias must be [C_out]");
    }

    std::vector<double> out(c_out * oh * ow, 0.0);
    const auto& in_v = input.values();
    const auto& w_v = weight.values();
    for (std::size_t co = 0; co < c_out; ++co) {
        double b = bias ? bias->values()[co] : 0.0;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = b;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                static_cast<std::ptrdiff_t>(padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += in_v[(ci * h + iy) * w + ix] *
                                   w_v[((co * c_in + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    check_finite(out, "conv2d");
    bool needs_grad =
        input.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
    Tensor y(Shape{c_out, oh, ow}, std::move(out), needs_grad);
    if (needs_grad) {
        tape.record([input, weight, bias, y, stride, padding, c_in, c_out, h, w, kh, kw, oh,
                     ow] {
            const auto& gy = y.grad();
            const auto& in_v = input.values();
            const auto& w_v = weight.values();
            for (std::size_t co = 0; co < c_out; ++co) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double g = gy[(co * oh + oy) * ow + ox];
                        if (g == 0.0) continue;
                        if (bias && bias->requires_grad()) bias->grad()[co] += g;
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                std::ptrdiff_t iy =
                                    static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(padding);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(padding);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                        continue;
                                    std::size_t ii = (ci * h + iy) * w + ix;
                                    std::size_t wi = ((co * c_in + ci) * kh + ky) * kw + kx;
                                    if (input.requires_grad())
                                        input.grad()[ii] += g * w_v[wi];
                                    if (weight.requires_grad())
                                        weight.grad()[wi] += g * in_v[ii];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expected rank-2 tensors");
    std::size_t m = a.shape()[0], k = a.shape()[1];
    std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = a.values()[i * k + kk];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.values()[kk * n + j];
        }
    check_finite(out, "matmul");
    Tensor y(Shape{m, n}, std::move(out), a.requires_grad() || b.requires_grad());
    if (y.requires_grad()) {
        tape.record([a, b, y, m, k, n] {
            const auto& gy = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            s += gy[i * n + j] * b.values()[kk * n + j];
                        ga[i * k + kk] += s;
                    }
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t kk = 0; kk < k; ++kk)
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            s += a.values()[i * k + kk] * gy[i * n + j];
                        gb[kk * n + j] += s;
                    }
            }
        });
    }
    return y;
}

Tensor row_softmax(Tape& tape, const Tensor& logits) {
    if (logits.rank() != 2)
        throw std::invalid_argument("row_softmax: expected rank-2 tensor");
    for (double v : logits.values())
        if (!std::isfinite(v)) throw std::domain_error("row_softmax: non-finite logit");
    std::size_t m = logits.shape()[0], n = logits.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = logits.values()[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits.values()[i * n + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double e = std::exp(logits.values()[i * n + j] - mx);
            out[i * n + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
    }
    Tensor y(logits.shape(), std::move(out), logits.requires_grad());
    if (y.requires_grad()) {
        tape.record([logits, y, m, n] {
            const auto& gy = y.grad();
            const auto& s = y.values();
            auto& gx = logits.grad();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * s[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    gx[i * n + j] += s[i * n + j] * (gy[i * n + j] - dot);
            }
        });
    }
    return y;
}

Tensor row_scale(Tape& tape, const Tensor& x, const std::vector<double>& weights) {
    if (x.rank() != 2) throw std::invalid_argument("row_scale: expected rank-2 tensor");
    std::size_t m = x.shape()[0], n = x.shape()[1];
    if (weights.size() != m)
        throw std::invalid_argument("row_scale: weight count does not match row count");
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.values()[i * n + j] * weights[i];
    check_finite(out, "row_scale");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, weights, m, n] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i * n + j] * weights[i];
        });
    }
    return y;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, DropoutMode mode, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (mode == DropoutMode::Eval || rate == 0.0) {
        // identity, but still a tape node so gradients flow
        std::vector<double> out = x.values();
        Tensor y(x.shape(), std::move(out), x.requires_grad());
        if (y.requires_grad()) {
            tape.record([x, y] { x.accumulate_grad(y.grad()); });
        }
        return y;
    }
    Rng rng(seed);
    double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> out(x.numel());
    std::vector<std::uint8_t> kept(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool keep = rng.next_unit() >= rate;
        kept[i] = keep;
        out[i] = keep ? x.values()[i] * keep_scale : 0.0;
    }
    check_finite(out, "dropout");
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        tape.record([x, y, kept = std::move(kept), keep_scale] {
            const auto& gy = y.grad();
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gy.size(); ++i)
                if (kept[i]) gx[i] += gy[i] * keep_scale;
        });
    }
    return y;
}

GradCheckReport gradcheck(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double h) {
    // analytic pass
    std::vector<Tensor> tracked;
    tracked.reserve(inputs.size());
    for (const auto& in : inputs)
        tracked.push_back(Tensor(in.shape(), in.values(), true));
    Tape tape;
    Tensor out = f(tape, tracked);
    if (out.numel() != 1) throw std::invalid_argument("gradcheck: f must return a scalar");
    if (!std::isfinite(out.item())) throw std::domain_error("gradcheck: non-finite evaluation");
    tape.backward(out);

    GradCheckReport report;
    for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
        const auto& base = inputs[ii];
        for (std::size_t coord = 0; coord < base.numel(); ++coord) {
            auto eval_at = [&](double delta) {
                std::vector<Tensor> probe;
                probe.reserve(inputs.size());
                for (std::size_t k = 0; k < inputs.size(); ++k) {
                    std::vector<double> v = inputs[k].values();
                    if (k == ii) v[coord] += delta;
                    probe.push_back(Tensor(inputs[k].shape(), std::move(v), false));
                }
                Tape scratch;
                double val = f(scratch, probe).item();
                if (!std::isfinite(val))
                    throw std::domain_error("gradcheck: non-finite evaluation");
                return val;
            };
            double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            double analytic = tracked[ii].has_grad() ? tracked[ii].grad()[coord] : 0.0;
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            double rel = std::abs(analytic - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_input = ii;
                report.worst_coord = coord;
                report.analytic_at_worst = analytic;
                report.numeric_at_worst = numeric;
            }
        }
    }
    return report;
}

}  // namespace matte
