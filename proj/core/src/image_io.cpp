#include "ccdn/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccdn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

// Next non-negative integer in the PGM header, skipping whitespace and
// '#' comment lines.
long read_header_int(std::FILE* f, const std::string& path) {
    int c;
    while ((c = std::fgetc(f)) != EOF) {
        if (c == '#') {
            while ((c = std::fgetc(f)) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) {
        throw std::runtime_error(path + ": malformed PGM header");
    }
    long value = c - '0';
    while ((c = std::fgetc(f)) != EOF && std::isdigit(c)) value = value * 10 + (c - '0');
    if (c != EOF) std::ungetc(c, f);
    return value;
}

} // namespace

Tensor read_pgm(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image: " + path.string());

    char m0 = 0, m1 = 0;
    if (std::fread(&m0, 1, 1, f.get()) != 1 || std::fread(&m1, 1, 1, f.get()) != 1 ||
        m0 != 'P' || m1 != '5') {
        throw std::runtime_error(path.string() + ": not a binary (P5) PGM file");
    }
    const long w = read_header_int(f.get(), path.string());
    const long h = read_header_int(f.get(), path.string());
    const long maxval = read_header_int(f.get(), path.string());
    if (w < 1 || h < 1) throw std::runtime_error(path.string() + ": bad PGM dimensions");
    if (maxval != 255) {
        throw std::runtime_error(path.string() + ": unsupported PGM maxval " +
                                 std::to_string(maxval) + " (need 255)");
    }
    const int sep = std::fgetc(f.get());
    if (sep == EOF || !std::isspace(sep)) {
        throw std::runtime_error(path.string() + ": malformed PGM header");
    }

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    if (std::fread(raw.data(), 1, raw.size(), f.get()) != raw.size()) {
        throw std::runtime_error(path.string() + ": truncated PGM pixel data");
    }

    Tensor img(static_cast<int>(h), static_cast<int>(w), 1);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
    return img;
}

void write_pgm(const Tensor& image, const std::filesystem::path& path) {
    if (image.channels != 1) {
        throw std::invalid_argument("write_pgm: expected single-channel image");
    }
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open image for writing: " + path.string());

    std::fprintf(f.get(), "P5\n%d %d\n255\n", image.width, image.height);
    std::vector<unsigned char> raw(image.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, image.data[i]));
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    if (std::fwrite(raw.data(), 1, raw.size(), f.get()) != raw.size()) {
        throw std::runtime_error(path.string() + ": image write failed");
    }
    if (std::fflush(f.get()) != 0) throw std::runtime_error(path.string() + ": image write failed");
}

} // namespace ccdn
