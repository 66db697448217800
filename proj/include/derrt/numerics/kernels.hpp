#pragma once

#include <cstddef>

// Dense kernels behind the convolutional encoder.
//
// Each kernel has a serial reference (`*_serial`) and an OpenMP variant that
// splits the work over channels. Every output element is owned by exactly one
// thread and accumulated in the same order as the serial loop, so both
// variants produce bit-identical results.

namespace derrt::num::kernels {

struct ConvShape {
  std::size_t in_channels;
  std::size_t height;
  std::size_t width;
  std::size_t out_channels;
  std::size_t kernel_h;
  std::size_t kernel_w;

  std::size_t out_h() const { return height - kernel_h + 1; }
  std::size_t out_w() const { return width - kernel_w + 1; }
};

/// Valid (unpadded) cross-correlation, stride 1.
/// in: [C,H,W], weight: [O,C,kh,kw], bias: [O] (nullable), out: [O,H',W'] (overwritten).
void conv2d_forward_serial(const ConvShape& s, const double* in, const double* weight,
                           const double* bias, double* out);
void conv2d_forward(const ConvShape& s, const double* in, const double* weight,
                    const double* bias, double* out);

/// Accumulates (+=) gradients. grad_in and grad_bias may be null.
void conv2d_backward_serial(const ConvShape& s, const double* in, const double* weight,
                            const double* grad_out, double* grad_in, double* grad_weight,
                            double* grad_bias);
void conv2d_backward(const ConvShape& s, const double* in, const double* weight,
                     const double* grad_out, double* grad_in, double* grad_weight,
                     double* grad_bias);

/// 2x2 window, stride 2, floor on odd sizes. argmax receives the flat input
/// index chosen for each output (first maximum in row-major window order).
void maxpool2x2_forward_serial(std::size_t channels, std::size_t h, std::size_t w,
                               const double* in, double* out, std::size_t* argmax);
void maxpool2x2_forward(std::size_t channels, std::size_t h, std::size_t w,
                        const double* in, double* out, std::size_t* argmax);

/// y[m] = W[m,k] x[k] (+ y if accumulate).
void matvec_serial(std::size_t m, std::size_t k, const double* w, const double* x, double* y);
void matvec(std::size_t m, std::size_t k, const double* w, const double* x, double* y);

/// Worker count the OpenMP variants will use (1 when built without OpenMP).
int max_threads();

}  // namespace derrt::num::kernels
