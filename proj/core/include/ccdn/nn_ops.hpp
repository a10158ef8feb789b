#pragma once

#include <cstdint>
#include <vector>

#include "ccdn/tensor.hpp"

namespace ccdn {

/// Bank of convolution kernels plus one bias per output channel.
/// Weight layout is [out][in][row][col], matching the on-disk order.
template <typename T>
struct BasicConvKernelBank {
    int kernel_h = 0;
    int kernel_w = 0;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<T> weights;
    std::vector<T> biases;

    BasicConvKernelBank() = default;
    BasicConvKernelBank(int kh, int kw, int cin, int cout);

    std::size_t weight_index(int out, int in, int ky, int kx) const {
        return ((static_cast<std::size_t>(out) * in_channels + in) * kernel_h + ky) * kernel_w + kx;
    }
    T& w(int out, int in, int ky, int kx) { return weights[weight_index(out, in, ky, kx)]; }
    const T& w(int out, int in, int ky, int kx) const {
        return weights[weight_index(out, in, ky, kx)];
    }

    bool same_shape(const BasicConvKernelBank& o) const {
        return kernel_h == o.kernel_h && kernel_w == o.kernel_w &&
               in_channels == o.in_channels && out_channels == o.out_channels;
    }
};

using ConvKernelBank = BasicConvKernelBank<float>;
using ConvKernelBankD = BasicConvKernelBank<double>;

/// Stride-1 convolution with same-size zero padding. No activation.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvKernelBank<T>& bank);

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;      // empty when not requested
    std::vector<T> weights;    // same layout as bank.weights
    std::vector<T> biases;
};

/// Gradients of sum(output * upstream) w.r.t. input, weights and biases.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicConvKernelBank<T>& bank,
                             const BasicTensor<T>& upstream, bool want_input_grad = true);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// Passes upstream where the forward input was > 0; zero elsewhere
/// (subgradient at 0 is taken as 0).
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

template <typename T>
struct MaxPoolResult {
    BasicTensor<T> output;
    // Per output cell: flat index of the winning input cell, or -1 when the
    // implicit bottom/right zero padding won.
    std::vector<std::int32_t> argmax;
};

/// 2x2 max pooling with stride 1 and zero padding on the bottom/right edges,
/// so the output keeps the input's size. Ties go to the first window cell in
/// row-major order.
template <typename T>
MaxPoolResult<T> maxpool2_forward(const BasicTensor<T>& input);

/// Routes each upstream value to its recorded argmax cell (accumulating);
/// padded cells receive nothing.
template <typename T>
BasicTensor<T> maxpool2_backward(const std::vector<std::int32_t>& argmax,
                                 const BasicTensor<T>& upstream);

} // namespace ccdn
