#include "xrgen/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace xrgen::kernels {

int conv_out_size(int in, int stride) { return (in - 1) / stride + 1; }

namespace {

inline void check_args(int k, int stride) {
    if (k != 1 && k != 3) throw std::invalid_argument("conv2d: kernel size must be 1 or 3");
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
}

// Accumulate one (ci, ky, kx) tap of the kernel onto the output plane.
inline void forward_tap(const double* xp, int h, int w, double wv, int ky, int kx, int pad,
                        int stride, double* yp, int oh, int ow) {
    for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        const double* xrow = xp + static_cast<std::size_t>(iy) * w;
        double* yrow = yp + static_cast<std::size_t>(oy) * ow;
        // valid ox satisfy 0 <= ox*stride + kx - pad < w
        int ox0 = 0;
        while (ox0 * stride + kx - pad < 0) ++ox0;
        int ox1 = ow;
        while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= w) --ox1;
        if (stride == 1) {
            const double* xs = xrow + kx - pad;
            for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xs[ox];
        } else {
            for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox * 2 + kx - pad];
        }
    }
}

}  // namespace

void conv2d_forward(const double* x, int cin, int h, int w,
                    const double* wgt, const double* bias,
                    int cout, int k, int stride,
                    double* y, ExecMode mode) {
    check_args(k, stride);
    const int pad = k / 2;
    const int oh = conv_out_size(h, stride);
    const int ow = conv_out_size(w, stride);
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    const std::size_t iplane = static_cast<std::size_t>(h) * w;

    auto run_co = [&](int co) {
        double* yp = y + co * oplane;
        const double b = bias ? bias[co] : 0.0;
        std::fill(yp, yp + oplane, b);
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = x + ci * iplane;
            const double* wp = wgt + (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                    forward_tap(xp, h, w, wp[ky * k + kx], ky, kx, pad, stride, yp, oh, ow);
        }
    };
    if (mode == ExecMode::Parallel) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < cout; ++co) run_co(co);
    } else {
        for (int co = 0; co < cout; ++co) run_co(co);
    }
}

void conv2d_backward_input(const double* dy, int cout,
                           const double* wgt, int cin, int h, int w,
                           int k, int stride,
                           double* dx, ExecMode mode) {
    check_args(k, stride);
    const int pad = k / 2;
    const int oh = conv_out_size(h, stride);
    const int ow = conv_out_size(w, stride);
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    const std::size_t iplane = static_cast<std::size_t>(h) * w;

    auto run_ci = [&](int ci) {
        double* dxp = dx + ci * iplane;
        for (int co = 0; co < cout; ++co) {
            const double* dyp = dy + co * oplane;
            const double* wp = wgt + (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wp[ky * k + kx];
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* dyrow = dyp + static_cast<std::size_t>(oy) * ow;
                        double* dxrow = dxp + static_cast<std::size_t>(iy) * w;
                        int ox0 = 0;
                        while (ox0 * stride + kx - pad < 0) ++ox0;
                        int ox1 = ow;
                        while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= w) --ox1;
                        if (stride == 1) {
                            double* ds = dxrow + kx - pad;
                            for (int ox = ox0; ox < ox1; ++ox) ds[ox] += wv * dyrow[ox];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox)
                                dxrow[ox * 2 + kx - pad] += wv * dyrow[ox];
                        }
                    }
                }
        }
    };
    if (mode == ExecMode::Parallel) {
#pragma omp parallel for schedule(static)
        for (int ci = 0; ci < cin; ++ci) run_ci(ci);
    } else {
        for (int ci = 0; ci < cin; ++ci) run_ci(ci);
    }
}

void conv2d_backward_params(const double* x, int cin, int h, int w,
                            const double* dy, int cout,
                            int k, int stride,
                            double* dwgt, double* dbias, ExecMode mode) {
    check_args(k, stride);
    const int pad = k / 2;
    const int oh = conv_out_size(h, stride);
    const int ow = conv_out_size(w, stride);
    const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
    const std::size_t iplane = static_cast<std::size_t>(h) * w;

    auto run_co = [&](int co) {
        const double* dyp = dy + co * oplane;
        if (dbias) {
            double s = 0.0;
            for (std::size_t i = 0; i < oplane; ++i) s += dyp[i];
            dbias[co] += s;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const double* xp = x + ci * iplane;
            double* wp = dwgt + (static_cast<std::size_t>(co) * cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    double s = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xp + static_cast<std::size_t>(iy) * w;
                        const double* dyrow = dyp + static_cast<std::size_t>(oy) * ow;
                        int ox0 = 0;
                        while (ox0 * stride + kx - pad < 0) ++ox0;
                        int ox1 = ow;
                        while (ox1 > ox0 && (ox1 - 1) * stride + kx - pad >= w) --ox1;
                        if (stride == 1) {
                            const double* xs = xrow + kx - pad;
                            for (int ox = ox0; ox < ox1; ++ox) s += xs[ox] * dyrow[ox];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox)
                                s += xrow[ox * 2 + kx - pad] * dyrow[ox];
                        }
                    }
                    wp[ky * k + kx] += s;
                }
        }
    };
    if (mode == ExecMode::Parallel) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < cout; ++co) run_co(co);
    } else {
        for (int co = 0; co < cout; ++co) run_co(co);
    }
}

void upsample_nearest(const double* x, int c, int h, int w, int factor, double* y) {
    const int oh = h * factor, ow = w * factor;
    for (int ci = 0; ci < c; ++ci) {
        const double* xp = x + static_cast<std::size_t>(ci) * h * w;
        double* yp = y + static_cast<std::size_t>(ci) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const double* xrow = xp + static_cast<std::size_t>(oy / factor) * w;
            double* yrow = yp + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) yrow[ox] = xrow[ox / factor];
        }
    }
}

void upsample_nearest_backward(const double* dy, int c, int h, int w, int factor, double* dx) {
    const int oh = h * factor, ow = w * factor;
    for (int ci = 0; ci < c; ++ci) {
        const double* dyp = dy + static_cast<std::size_t>(ci) * oh * ow;
        double* dxp = dx + static_cast<std::size_t>(ci) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            const double* dyrow = dyp + static_cast<std::size_t>(oy) * ow;
            double* dxrow = dxp + static_cast<std::size_t>(oy / factor) * w;
            for (int ox = 0; ox < ow; ++ox) dxrow[ox / factor] += dyrow[ox];
        }
    }
}

}  // namespace xrgen::kernels
