#include "derrt/numerics/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace derrt::num::kernels {

namespace {

// Output channel o of the forward pass.
inline void conv_forward_channel(const ConvShape& s, std::size_t o, const double* in,
                                 const double* weight, const double* bias, double* out) {
  const std::size_t oh = s.out_h();
  const std::size_t ow = s.out_w();
  double* dst = out + o * oh * ow;
  std::fill(dst, dst + oh * ow, bias ? bias[o] : 0.0);
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const double* src = in + c * s.height * s.width;
    const double* wk = weight + (o * s.in_channels + c) * s.kernel_h * s.kernel_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const double wv = wk[ky * s.kernel_w + kx];
        for (std::size_t y = 0; y < oh; ++y) {
          const double* row = src + (y + ky) * s.width + kx;
          double* drow = dst + y * ow;
          for (std::size_t x = 0; x < ow; ++x) drow[x] += wv * row[x];
        }
      }
    }
  }
}

inline void conv_backward_weight_channel(const ConvShape& s, std::size_t o, const double* in,
                                         const double* grad_out, double* grad_weight,
                                         double* grad_bias) {
  const std::size_t oh = s.out_h();
  const std::size_t ow = s.out_w();
  const double* g = grad_out + o * oh * ow;
  if (grad_bias) {
    double acc = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) acc += g[i];
    grad_bias[o] += acc;
  }
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const double* src = in + c * s.height * s.width;
    double* gw = grad_weight + (o * s.in_channels + c) * s.kernel_h * s.kernel_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        double acc = 0.0;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* row = src + (y + ky) * s.width + kx;
          const double* grow = g + y * ow;
          for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * row[x];
        }
        gw[ky * s.kernel_w + kx] += acc;
      }
    }
  }
}

// Input channel c of the input gradient, summed over output channels in order.
inline void conv_backward_input_channel(const ConvShape& s, std::size_t c, const double* weight,
                                        const double* grad_out, double* grad_in) {
  const std::size_t oh = s.out_h();
  const std::size_t ow = s.out_w();
  double* gi = grad_in + c * s.height * s.width;
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    const double* g = grad_out + o * oh * ow;
    const double* wk = weight + (o * s.in_channels + c) * s.kernel_h * s.kernel_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
        const double wv = wk[ky * s.kernel_w + kx];
        for (std::size_t y = 0; y < oh; ++y) {
          double* row = gi + (y + ky) * s.width + kx;
          const double* grow = g + y * ow;
          for (std::size_t x = 0; x < ow; ++x) row[x] += wv * grow[x];
        }
      }
    }
  }
}

inline void maxpool_channel(std::size_t c, std::size_t h, std::size_t w, const double* in,
                            double* out, std::size_t* argmax) {
  const std::size_t ph = h / 2;
  const std::size_t pw = w / 2;
  for (std::size_t y = 0; y < ph; ++y) {
    for (std::size_t x = 0; x < pw; ++x) {
      std::size_t best = c * h * w + (2 * y) * w + 2 * x;
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t idx = c * h * w + (2 * y + dy) * w + (2 * x + dx);
          if (in[idx] > in[best]) best = idx;
        }
      }
      const std::size_t o = c * ph * pw + y * pw + x;
      out[o] = in[best];
      argmax[o] = best;
    }
  }
}

}  // namespace

void conv2d_forward_serial(const ConvShape& s, const double* in, const double* weight,
                           const double* bias, double* out) {
  for (std::size_t o = 0; o < s.out_channels; ++o) conv_forward_channel(s, o, in, weight, bias, out);
}

void conv2d_forward(const ConvShape& s, const double* in, const double* weight, const double* bias,
                    double* out) {
  const auto n = static_cast<long>(s.out_channels);
#pragma omp parallel for schedule(static) if (n > 1)
  for (long o = 0; o < n; ++o)
    conv_forward_channel(s, static_cast<std::size_t>(o), in, weight, bias, out);
}

void conv2d_backward_serial(const ConvShape& s, const double* in, const double* weight,
                            const double* grad_out, double* grad_in, double* grad_weight,
                            double* grad_bias) {
  for (std::size_t o = 0; o < s.out_channels; ++o)
    conv_backward_weight_channel(s, o, in, grad_out, grad_weight, grad_bias);
  if (grad_in) {
    for (std::size_t c = 0; c < s.in_channels; ++c)
      conv_backward_input_channel(s, c, weight, grad_out, grad_in);
  }
}

void conv2d_backward(const ConvShape& s, const double* in, const double* weight,
                     const double* grad_out, double* grad_in, double* grad_weight,
                     double* grad_bias) {
  const auto n_out = static_cast<long>(s.out_channels);
#pragma omp parallel for schedule(static) if (n_out > 1)
  for (long o = 0; o < n_out; ++o)
    conv_backward_weight_channel(s, static_cast<std::size_t>(o), in, grad_out, grad_weight, grad_bias);
  if (grad_in) {
    const auto n_in = static_cast<long>(s.in_channels);
#pragma omp parallel for schedule(static) if (n_in > 1)
    for (long c = 0; c < n_in; ++c)
      conv_backward_input_channel(s, static_cast<std::size_t>(c), weight, grad_out, grad_in);
  }
}

void maxpool2x2_forward_serial(std::size_t channels, std::size_t h, std::size_t w, const double* in,
                               double* out, std::size_t* argmax) {
  for (std::size_t c = 0; c < channels; ++c) maxpool_channel(c, h, w, in, out, argmax);
}

void maxpool2x2_forward(std::size_t channels, std::size_t h, std::size_t w, const double* in,
                        double* out, std::size_t* argmax) {
  const auto n = static_cast<long>(channels);
#pragma omp parallel for schedule(static) if (n > 1)
  for (long c = 0; c < n; ++c) maxpool_channel(static_cast<std::size_t>(c), h, w, in, out, argmax);
}

void matvec_serial(std::size_t m, std::size_t k, const double* w, const double* x, double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w + i * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void matvec(std::size_t m, std::size_t k, const double* w, const double* x, double* y) {
  const auto n = static_cast<long>(m);
  // Only worth forking for the wide embedding layers.
#pragma omp parallel for schedule(static) if (m * k >= 16384)
  for (long i = 0; i < n; ++i) {
    const double* row = w + static_cast<std::size_t>(i) * k;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace derrt::num::kernels
