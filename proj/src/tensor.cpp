#include "xrgen/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace xrgen {

double min_value(const ImageTensor& t) {
    return *std::min_element(t.values.begin(), t.values.end());
}

double max_value(const ImageTensor& t) {
    return *std::max_element(t.values.begin(), t.values.end());
}

double mean_abs(const ImageTensor& t) {
    double s = 0.0;
    for (double v : t.values) s += std::fabs(v);
    return s / static_cast<double>(t.size());
}

double l2_norm(const ImageTensor& t) {
    double s = 0.0;
    for (double v : t.values) s += v * v;
    return std::sqrt(s);
}

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("concat_channels: spatial shape mismatch");
    ImageTensor out(a.height, a.width, a.channels + b.channels);
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + a.values.size());
    return out;
}

}  // namespace xrgen
