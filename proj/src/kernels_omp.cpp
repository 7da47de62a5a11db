#include <algorithm>
#include <vector>

#include "icf/kernels.hpp"

namespace icf::kernels::omp {

namespace {

// Output indices o in [begin, end) for which o*stride + tap - pad lands inside
// [0, extent).
struct Range {
    std::size_t begin = 0, end = 0;
};

Range valid_outputs(std::size_t tap, std::size_t stride, std::size_t pad, std::size_t extent, std::size_t outputs) {
    Range r;
    if (pad > tap) r.begin = (pad - tap + stride - 1) / stride;
    if (extent + pad <= tap) return {0, 0};
    r.end = std::min(outputs, (extent - 1 + pad - tap) / stride + 1);
    if (r.begin > r.end) r.begin = r.end;
    return r;
}

constexpr std::size_t column_block = 256;

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
#pragma omp parallel for if (m * k * n > parallel_threshold) schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C + i * n;
        const double* arow = A + i * k;
        if (n == 1) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * B[p];
            crow[0] = acc;
            continue;
        }
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void matmul_grad_a(std::span<const double> dc, std::span<const double> b, std::span<double> da, std::size_t m,
                   std::size_t k, std::size_t n) {
    const double* DC = dc.data();
    const double* B = b.data();
    double* DA = da.data();
#pragma omp parallel for if (m * k * n > parallel_threshold) schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = DC + i * n;
        double* darow = DA + i * k;
        if (n == 1) {
            const double d = dcrow[0];
            for (std::size_t p = 0; p < k; ++p) darow[p] += d * B[p];
            continue;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = B + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            darow[p] += acc;
        }
    }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> dc, std::span<double> db, std::size_t m,
                   std::size_t k, std::size_t n) {
    const double* A = a.data();
    const double* DC = dc.data();
    double* DB = db.data();
    if (n == 1) {
        // db[p] = sum_i a[i,p] dc[i]; blocks of p, rows of a streamed in order.
        const std::size_t blocks = (k + column_block - 1) / column_block;
#pragma omp parallel for if (m * k > parallel_threshold) schedule(static)
        for (std::size_t blk = 0; blk < blocks; ++blk) {
            const std::size_t p0 = blk * column_block;
            const std::size_t p1 = std::min(k, p0 + column_block);
            for (std::size_t i = 0; i < m; ++i) {
                const double d = DC[i];
                const double* arow = A + i * k;
                for (std::size_t p = p0; p < p1; ++p) DB[p] += arow[p] * d;
            }
        }
        return;
    }
#pragma omp parallel for if (m * k * n > parallel_threshold) schedule(static)
    for (std::size_t p = 0; p < k; ++p) {
        double* dbrow = DB + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double aip = A[i * k + p];
            const double* dcrow = DC + i * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
        }
    }
}

namespace {

// Patch matrix [Cin*kH*kW x outH*outW]; padded taps are zero.
void im2col(const ConvGeometry& g, const double* in, std::vector<double>& cols) {
    const std::size_t plane = g.out_h * g.out_w;
    cols.assign(g.in_channels * g.kernel_h * g.kernel_w * plane, 0.0);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* iplane = in + ci * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const Range ry = valid_outputs(ky, g.stride, g.pad_top, g.in_h, g.out_h);
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const Range rx = valid_outputs(kx, g.stride, g.pad_left, g.in_w, g.out_w);
                // Unsigned wrap-around is intended: ox*stride + shift >= 0 on rx.
                const std::size_t shift = kx - g.pad_left;
                double* row = cols.data() + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * plane;
                for (std::size_t oy = ry.begin; oy < ry.end; ++oy) {
                    const double* irow = iplane + (oy * g.stride + ky - g.pad_top) * g.in_w;
                    double* crow = row + oy * g.out_w;
                    for (std::size_t ox = rx.begin; ox < rx.end; ++ox) crow[ox] = irow[ox * g.stride + shift];
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const std::vector<double>& cols, double* din) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        double* iplane = din + ci * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const Range ry = valid_outputs(ky, g.stride, g.pad_top, g.in_h, g.out_h);
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const Range rx = valid_outputs(kx, g.stride, g.pad_left, g.in_w, g.out_w);
                const std::size_t shift = kx - g.pad_left;
                const double* row = cols.data() + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * plane;
                for (std::size_t oy = ry.begin; oy < ry.end; ++oy) {
                    double* irow = iplane + (oy * g.stride + ky - g.pad_top) * g.in_w;
                    const double* crow = row + oy * g.out_w;
                    for (std::size_t ox = rx.begin; ox < rx.end; ++ox) irow[ox * g.stride + shift] += crow[ox];
                }
            }
        }
    }
}

std::vector<double>& scratch() {
    thread_local std::vector<double> buf;
    return buf;
}

std::size_t patch_size(const ConvGeometry& g) { return g.in_channels * g.kernel_h * g.kernel_w; }

}  // namespace

void conv2d(const ConvGeometry& g, std::span<const double> input, std::span<const double> kernels,
            std::span<double> output) {
    auto& cols = scratch();
    im2col(g, input.data(), cols);
    matmul(kernels, cols, output, g.out_channels, patch_size(g), g.out_h * g.out_w);
}

void conv2d_grad_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> kernels,
                       std::span<double> dinput) {
    auto& cols = scratch();
    cols.assign(patch_size(g) * g.out_h * g.out_w, 0.0);
    matmul_grad_b(kernels, dout, cols, g.out_channels, patch_size(g), g.out_h * g.out_w);
    col2im_add(g, cols, dinput.data());
}

void conv2d_grad_kernels(const ConvGeometry& g, std::span<const double> input, std::span<const double> dout,
                         std::span<double> dkernels) {
    auto& cols = scratch();
    im2col(g, input.data(), cols);
    matmul_grad_a(dout, cols, dkernels, g.out_channels, patch_size(g), g.out_h * g.out_w);
}

}  // namespace icf::kernels::omp
