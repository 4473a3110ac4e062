#pragma once

#include <cstddef>

namespace covidseg::kernels {

// Geometry of a batched 2-D cross-correlation. Input (n, cin, h, w), kernel
// (cout, cin, kh, kw), output (n, cout, oh, ow).
struct ConvGeometry {
  std::size_t n = 1, cin = 1, h = 1, w = 1;
  std::size_t cout = 1, kh = 1, kw = 1;
  std::size_t stride = 1, padding = 0, dilation = 1;
  std::size_t oh = 1, ow = 1;

  std::size_t taps() const { return cin * kh * kw; }
  std::size_t out_plane() const { return oh * ow; }
};

// Reduction order (both forward paths): for each output element the accumulator
// starts at +0.0 and takes acc = fma(input, weight, acc) over (ci, ky, kx) in
// row-major order, out-of-range taps reading 0.0; the bias is added last.
// conv2d_forward must be bitwise equal to conv2d_forward_reference.
void conv2d_forward_reference(const ConvGeometry& g, const double* input, const double* kernel, const double* bias,
                              double* output);
void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernel, const double* bias,
                    double* output);

// Accumulating backward passes (+=). Any of the destination pointers may be null.
void conv2d_backward(const ConvGeometry& g, const double* input, const double* kernel, const double* grad_output,
                     double* grad_input, double* grad_kernel, double* grad_bias);

// C(MxN) += A(MxK) * B(KxN), row-major with leading dimensions. Each C element is
// updated by a sequential fma chain in ascending k.
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
                     std::size_t ldb, double* c, std::size_t ldc);

}  // namespace covidseg::kernels
