#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccdn {

/// Dense H x W x C tensor. Storage is channel-planar (c, y, x), i.e. one
/// contiguous H*W plane per channel, so row-wise kernels stream memory.
template <typename T>
struct BasicTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<T> data;

    BasicTensor() = default;

    BasicTensor(int h, int w, int c, T fill = T(0))
        : height(h), width(w), channels(c) {
        if (h < 1 || w < 1 || c < 1) {
            throw std::invalid_argument("tensor dimensions must be >= 1, got " +
                                        std::to_string(h) + "x" + std::to_string(w) +
                                        "x" + std::to_string(c));
        }
        data.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }

    T& at(int c, int y, int x) { return data[index(c, y, x)]; }
    const T& at(int c, int y, int x) const { return data[index(c, y, x)]; }

    T* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
    const T* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * height * width;
    }

    bool same_shape(const BasicTensor& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename T>
BasicTensor<double> to_double(const BasicTensor<T>& t) {
    BasicTensor<double> out(t.height, t.width, t.channels);
    for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<double>(t.data[i]);
    return out;
}

} // namespace ccdn
