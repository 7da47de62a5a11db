#include <string>

#include "icf/kernels.hpp"

namespace icf::kernels {

const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

Padding parse_padding(const std::string& text) {
    if (text == "same") return Padding::same;
    if (text == "valid") return Padding::valid;
    throw std::invalid_argument("unknown padding '" + text + "' (expected same|valid)");
}

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, std::size_t stride, Padding padding) {
    if (input.size() != 3 || kernels.size() != 4)
        throw ShapeError("conv2d expects input [C x H x W] and kernels [Cout x Cin x kH x kW], got " +
                         format_shape(input) + " and " + format_shape(kernels));
    if (kernels[1] != input[0])
        throw ShapeError("conv2d channel mismatch: input " + format_shape(input) + ", kernels " + format_shape(kernels));
    if (stride == 0) throw ShapeError("conv2d stride must be positive");

    ConvGeometry g;
    g.in_channels = input[0];
    g.in_h = input[1];
    g.in_w = input[2];
    g.out_channels = kernels[0];
    g.kernel_h = kernels[2];
    g.kernel_w = kernels[3];
    g.stride = stride;

    if (padding == Padding::valid) {
        if (g.kernel_h > g.in_h || g.kernel_w > g.in_w)
            throw ShapeError("conv2d kernel " + format_shape(kernels) + " larger than input " + format_shape(input) +
                             " under valid padding");
        g.out_h = (g.in_h - g.kernel_h) / stride + 1;
        g.out_w = (g.in_w - g.kernel_w) / stride + 1;
    } else {
        g.out_h = (g.in_h + stride - 1) / stride;
        g.out_w = (g.in_w + stride - 1) / stride;
        const std::size_t need_h = (g.out_h - 1) * stride + g.kernel_h;
        const std::size_t need_w = (g.out_w - 1) * stride + g.kernel_w;
        g.pad_top = need_h > g.in_h ? (need_h - g.in_h) / 2 : 0;
        g.pad_left = need_w > g.in_w ? (need_w - g.in_w) / 2 : 0;
    }
    return g;
}

ConvGeometry conv_transpose_geometry(const Shape& output, const Shape& kernels, std::size_t stride,
                                     Padding padding) {
    if (output.size() != 3 || kernels.size() != 4)
        throw ShapeError("conv2d_transpose expects input [C x H x W] and kernels [C x Cout x kH x kW], got " +
                         format_shape(output) + " and " + format_shape(kernels));
    if (kernels[0] != output[0])
        throw ShapeError("conv2d_transpose channel mismatch: input " + format_shape(output) + ", kernels " +
                         format_shape(kernels));
    if (stride == 0) throw ShapeError("conv2d_transpose stride must be positive");
    Shape input{kernels[1], 0, 0};
    if (padding == Padding::valid) {
        input[1] = (output[1] - 1) * stride + kernels[2];
        input[2] = (output[2] - 1) * stride + kernels[3];
    } else {
        input[1] = output[1] * stride;
        input[2] = output[2] * stride;
    }
    ConvGeometry g = conv_geometry(input, kernels, stride, padding);
    if (g.out_h != output[1] || g.out_w != output[2])
        throw ShapeError("conv2d_transpose input " + format_shape(output) + " is not a conv2d output shape for kernels " +
                         format_shape(kernels));
    return g;
}

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

void matmul_grad_a(std::span<const double> dc, std::span<const double> b, std::span<double> da, std::size_t m,
                   std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) da[i * k + p] += dc[i * n + j] * b[p * n + j];
}

void matmul_grad_b(std::span<const double> a, std::span<const double> dc, std::span<double> db, std::size_t m,
                   std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) db[p * n + j] += a[i * k + p] * dc[i * n + j];
}

namespace {

// Input coordinate touched by output coordinate `o` and kernel tap `t`;
// returns false when it falls in the zero padding.
bool input_coord(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad, std::size_t extent,
                 std::size_t& out) {
    const auto pos = static_cast<std::ptrdiff_t>(o * stride + t) - static_cast<std::ptrdiff_t>(pad);
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
    out = static_cast<std::size_t>(pos);
    return true;
}

}  // namespace

void conv2d(const ConvGeometry& g, std::span<const double> input, std::span<const double> kernels,
            std::span<double> output) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                double acc = 0.0;
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                            std::size_t iy, ix;
                            if (!input_coord(oy, ky, g.stride, g.pad_top, g.in_h, iy)) continue;
                            if (!input_coord(ox, kx, g.stride, g.pad_left, g.in_w, ix)) continue;
                            acc += input[(ci * g.in_h + iy) * g.in_w + ix] *
                                   kernels[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
                        }
                output[(co * g.out_h + oy) * g.out_w + ox] = acc;
            }
}

void conv2d_grad_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernels,
                       std::span<double> dinput) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const double d = dout[(co * g.out_h + oy) * g.out_w + ox];
                for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                            std::size_t iy, ix;
                            if (!input_coord(oy, ky, g.stride, g.pad_top, g.in_h, iy)) continue;
                            if (!input_coord(ox, kx, g.stride, g.pad_left, g.in_w, ix)) continue;
                            dinput[(ci * g.in_h + iy) * g.in_w + ix] +=
                                d * kernels[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
                        }
            }
}

void conv2d_grad_kernels(const ConvGeometry& g, std::span<const double> input, std::span<const double> dout,
                         std::span<double> dkernels) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    double acc = 0.0;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy)
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            std::size_t iy, ix;
                            if (!input_coord(oy, ky, g.stride, g.pad_top, g.in_h, iy)) continue;
                            if (!input_coord(ox, kx, g.stride, g.pad_left, g.in_w, ix)) continue;
                            acc += input[(ci * g.in_h + iy) * g.in_w + ix] * dout[(co * g.out_h + oy) * g.out_w + ox];
                        }
                    dkernels[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
                }
}

}  // namespace serial
}  // namespace icf::kernels
