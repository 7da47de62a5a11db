#pragma once

// Dense and convolution kernels used by the autodiff engine.
//
// Two implementations live side by side:
//   serial::  textbook nested loops, kept as the reference for tests.
//   omp::     cache-friendly loop order (convolutions via patch matrices)
//             with OpenMP over independent outputs.
//
// Every omp:: kernel sums each output element in a fixed order that does not
// depend on the thread count, so results are reproducible across runs.
// Gradient kernels accumulate (+=) into their outputs.

#include <cstddef>
#include <span>

#include "icf/tensor.hpp"

namespace icf::kernels {

enum class Padding { same, valid };

const char* to_string(Padding p);
Padding parse_padding(const std::string& text);

struct ConvGeometry {
    std::size_t in_channels = 0, in_h = 0, in_w = 0;
    std::size_t out_channels = 0, out_h = 0, out_w = 0;
    std::size_t kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1;
    std::size_t pad_top = 0, pad_left = 0;

    std::size_t input_size() const { return in_channels * in_h * in_w; }
    std::size_t output_size() const { return out_channels * out_h * out_w; }
    std::size_t kernel_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
    std::size_t macs() const { return output_size() * in_channels * kernel_h * kernel_w; }
};

/// Geometry of a cross-correlation of `input` [C_in x H x W] with `kernels`
/// [C_out x C_in x kH x kW]. Throws ShapeError on inconsistent shapes.
ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, std::size_t stride, Padding padding);

/// Geometry of the conv2d whose output has shape `output` [C_out x H' x W'].
/// The consumed input size is (H'-1)*stride + kH for valid padding and
/// H'*stride for same padding. Throws ShapeError if that conv2d would not
/// reproduce `output`.
ConvGeometry conv_transpose_geometry(const Shape& output, const Shape& kernels, std::size_t stride,
                                     Padding padding);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_grad_a(std::span<const double> dc, std::span<const double> b, std::span<double> da, std::size_t m,
                   std::size_t k, std::size_t n);
void matmul_grad_b(std::span<const double> a, std::span<const double> dc, std::span<double> db, std::size_t m,
                   std::size_t k, std::size_t n);

void conv2d(const ConvGeometry& g, std::span<const double> input, std::span<const double> kernels,
            std::span<double> output);
void conv2d_grad_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernels,
                       std::span<double> dinput);
void conv2d_grad_kernels(const ConvGeometry& g, std::span<const double> input, std::span<const double> dout,
                         std::span<double> dkernels);

}  // namespace serial

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_grad_a(std::span<const double> dc, std::span<const double> b, std::span<double> da, std::size_t m,
                   std::size_t k, std::size_t n);
void matmul_grad_b(std::span<const double> a, std::span<const double> dc, std::span<double> db, std::size_t m,
                   std::size_t k, std::size_t n);

void conv2d(const ConvGeometry& g, std::span<const double> input, std::span<const double> kernels,
            std::span<double> output);
void conv2d_grad_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernels,
                       std::span<double> dinput);
void conv2d_grad_kernels(const ConvGeometry& g, std::span<const double> input, std::span<const double> dout,
                         std::span<double> dkernels);

}  // namespace omp

/// Work (multiply-adds) below which the omp:: kernels stay on one thread.
inline constexpr std::size_t parallel_threshold = 1u << 16;

}  // namespace icf::kernels
