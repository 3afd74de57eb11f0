#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace xrgen {

// H x W (x channels) grid of doubles. Storage is planar: one row-major
// H*W plane per channel, values[(c*height + y)*width + x].
// Data-space images (radiographs, conditions) live in [0,1]; perturbed
// states and scores are unbounded.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> values;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c = 1) : height(h), width(w), channels(c) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw std::invalid_argument("ImageTensor: dimensions must be positive");
        values.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    }

    std::size_t size() const { return values.size(); }

    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    double* plane(int c) { return values.data() + static_cast<std::size_t>(c) * height * width; }
    const double* plane(int c) const {
        return values.data() + static_cast<std::size_t>(c) * height * width;
    }

    bool same_shape(const ImageTensor& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

inline void check_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double min_value(const ImageTensor& t);
double max_value(const ImageTensor& t);
double mean_abs(const ImageTensor& t);
double l2_norm(const ImageTensor& t);
// Concatenate along the channel axis (equal height/width).
ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b);

}  // namespace xrgen
