#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xrgen/tensor.hpp"

namespace xrgen::pgm {

// Binary PGM (P5), 16-bit big-endian samples, maxval 65535. A sample value v
// encodes intensity v/65535, so images must lie in [0,1] when written.

std::uint16_t encode_sample(double v);  // lround(v * 65535), v clamped to [0,1]

void write(const std::string& path, const ImageTensor& img);  // single channel only

ImageTensor read(const std::string& path);

// Raw 16-bit codes, for bit-exactness checks on stored files.
struct RawImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint16_t> codes;
};
RawImage read_raw(const std::string& path);

}  // namespace xrgen::pgm
