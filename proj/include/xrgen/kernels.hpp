#pragma once

#include "xrgen/parallel.hpp"

namespace xrgen::kernels {

// Planar-CHW 2D convolution, kernel size k in {1,3}, zero padding k/2,
// stride in {1,2}. Weight layout: w[((co*cin + ci)*k + ky)*k + kx], bias b[co]
// (bias may be null). Output is oh x ow with oh = (h-1)/stride + 1.
// Parallel variants split over independent output slices and are bitwise
// identical to the serial reference.

int conv_out_size(int in, int stride);

void conv2d_forward(const double* x, int cin, int h, int w,
                    const double* wgt, const double* bias,
                    int cout, int k, int stride,
                    double* y, ExecMode mode);

// dx must be zero-initialized by the caller.
void conv2d_backward_input(const double* dy, int cout,
                           const double* wgt, int cin, int h, int w,
                           int k, int stride,
                           double* dx, ExecMode mode);

// Accumulates into dwgt / dbias (dbias may be null).
void conv2d_backward_params(const double* x, int cin, int h, int w,
                            const double* dy, int cout,
                            int k, int stride,
                            double* dwgt, double* dbias, ExecMode mode);

// Nearest-neighbour upsample by an integer factor (factor >= 1).
void upsample_nearest(const double* x, int c, int h, int w, int factor, double* y);
// Transpose of upsample_nearest: sums dy cells back onto the source grid.
void upsample_nearest_backward(const double* dy, int c, int h, int w, int factor, double* dx);

}  // namespace xrgen::kernels
