#include "xrgen/pgm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "xrgen/errors.hpp"

namespace xrgen::pgm {

std::uint16_t encode_sample(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<std::uint16_t>(std::lround(v * 65535.0));
}

void write(const std::string& path, const ImageTensor& img) {
    if (img.channels != 1) throw std::invalid_argument("pgm::write: single-channel images only");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("pgm::write: cannot open " + path);
    f << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(img.width) * img.height * 2);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const std::uint16_t c = encode_sample(img.values[i]);
        buf[2 * i] = static_cast<unsigned char>(c >> 8);  // big-endian
        buf[2 * i + 1] = static_cast<unsigned char>(c & 0xff);
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("pgm::write: write failed for " + path);
}

namespace {

int read_pnm_int(std::istream& in) {
    // skips whitespace and '#' comments
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw DataError("pgm: truncated header");
    int value = 0;
    bool any = false;
    while (c != EOF && isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw DataError("pgm: malformed header");
    return value;
}

RawImage read_raw_stream(std::istream& f, const std::string& path) {
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (!f || m0 != 'P' || m1 != '5') throw DataError("pgm: not a P5 file: " + path);
    RawImage raw;
    raw.width = read_pnm_int(f);
    raw.height = read_pnm_int(f);
    const int maxval = read_pnm_int(f);
    if (maxval != 65535) throw DataError("pgm: expected maxval 65535 in " + path);
    if (raw.width <= 0 || raw.height <= 0) throw DataError("pgm: bad dimensions in " + path);
    const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
    std::vector<unsigned char> buf(n * 2);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(f.gcount()) != buf.size())
        throw DataError("pgm: truncated pixel data in " + path);
    raw.codes.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        raw.codes[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    return raw;
}

}  // namespace

RawImage read_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("pgm::read: cannot open " + path);
    return read_raw_stream(f, path);
}

ImageTensor read(const std::string& path) {
    RawImage raw = read_raw(path);
    ImageTensor img(raw.height, raw.width, 1);
    for (std::size_t i = 0; i < raw.codes.size(); ++i)
        img.values[i] = raw.codes[i] / 65535.0;
    return img;
}

}  // namespace xrgen::pgm
