#include "ccdn/nn_ops.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace ccdn {

template <typename T>
BasicConvKernelBank<T>::BasicConvKernelBank(int kh, int kw, int cin, int cout)
    : kernel_h(kh), kernel_w(kw), in_channels(cin), out_channels(cout) {
    if (kh < 1 || kw < 1 || cin < 1 || cout < 1) {
        throw std::invalid_argument("kernel bank dimensions must be >= 1");
    }
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw std::invalid_argument("kernel size must be odd for same-size padding, got " +
                                    std::to_string(kh) + "x" + std::to_string(kw));
    }
    weights.assign(static_cast<std::size_t>(kh) * kw * cin * cout, T(0));
    biases.assign(static_cast<std::size_t>(cout), T(0));
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvKernelBank<T>& bank) {
    if (input.channels != bank.in_channels) {
        throw std::invalid_argument("conv2d_forward: input has " +
                                    std::to_string(input.channels) + " channels, bank expects " +
                                    std::to_string(bank.in_channels));
    }
    const int H = input.height, W = input.width, Cin = input.channels;
    const int Cout = bank.out_channels, kh = bank.kernel_h, kw = bank.kernel_w;
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;

    BasicTensor<T> out(H, W, Cout);
    // Accumulation order per output cell: kernel row, kernel col, channel
    // innermost. Output channels are processed four at a time so each source
    // row load feeds four accumulator rows; per-accumulator ordering is
    // unaffected.
    std::vector<T> acc(static_cast<std::size_t>(4) * W);

    for (int j0 = 0; j0 < Cout; j0 += 4) {
        const int jb = std::min(4, Cout - j0);
        for (int y = 0; y < H; ++y) {
            std::fill(acc.begin(), acc.end(), T(0));
            T* a0 = acc.data();
            T* a1 = a0 + W;
            T* a2 = a1 + W;
            T* a3 = a2 + W;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = y + ky - ph;
                if (iy < 0 || iy >= H) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int shift = kx - pw;
                    const int x0 = std::max(0, -shift);
                    const int x1 = std::min(W, W - shift);
                    for (int i = 0; i < Cin; ++i) {
                        const T* src = input.plane(i) + static_cast<std::size_t>(iy) * W + shift;
                        if (jb == 4) {
                            const T w0 = bank.w(j0 + 0, i, ky, kx);
                            const T w1 = bank.w(j0 + 1, i, ky, kx);
                            const T w2 = bank.w(j0 + 2, i, ky, kx);
                            const T w3 = bank.w(j0 + 3, i, ky, kx);
#pragma omp simd
                            for (int x = x0; x < x1; ++x) {
                                const T s = src[x];
                                a0[x] += w0 * s;
                                a1[x] += w1 * s;
                                a2[x] += w2 * s;
                                a3[x] += w3 * s;
                            }
                        } else {
                            for (int t = 0; t < jb; ++t) {
                                const T wv = bank.w(j0 + t, i, ky, kx);
                                T* a = acc.data() + static_cast<std::size_t>(t) * W;
#pragma omp simd
                                for (int x = x0; x < x1; ++x) a[x] += wv * src[x];
                            }
                        }
                    }
                }
            }
            for (int t = 0; t < jb; ++t) {
                const T b = bank.biases[j0 + t];
                const T* a = acc.data() + static_cast<std::size_t>(t) * W;
                T* dst = out.plane(j0 + t) + static_cast<std::size_t>(y) * W;
                for (int x = 0; x < W; ++x) dst[x] = a[x] + b;
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicConvKernelBank<T>& bank,
                             const BasicTensor<T>& upstream, bool want_input_grad) {
    if (input.channels != bank.in_channels) {
        throw std::invalid_argument("conv2d_backward: input channel mismatch");
    }
    if (upstream.height != input.height || upstream.width != input.width ||
        upstream.channels != bank.out_channels) {
        throw std::invalid_argument("conv2d_backward: upstream shape does not match forward output");
    }
    const int H = input.height, W = input.width, Cin = input.channels;
    const int Cout = bank.out_channels, kh = bank.kernel_h, kw = bank.kernel_w;
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;

    ConvGrads<T> g;
    g.weights.assign(bank.weights.size(), T(0));
    g.biases.assign(bank.biases.size(), T(0));

    for (int j = 0; j < Cout; ++j) {
        T bsum = T(0);
        const T* uplane = upstream.plane(j);
        const std::size_t n = static_cast<std::size_t>(H) * W;
#pragma omp simd reduction(+ : bsum)
        for (std::size_t p = 0; p < n; ++p) bsum += uplane[p];
        g.biases[j] = bsum;
    }

    // grad_w[j,i,ky,kx] = sum over output cells of upstream * shifted input.
    if (kh == 3 && kw == 3) {
        // hot path: whole-plane reduction with nine fused accumulators over a
        // zero-padded copy of the input plane (pad taps contribute zero)
        std::vector<T> padded(static_cast<std::size_t>(H + 2) * (W + 2), T(0));
        for (int i = 0; i < Cin; ++i) {
            for (int y = 0; y < H; ++y) {
                const T* src = input.plane(i) + static_cast<std::size_t>(y) * W;
                std::copy(src, src + W, padded.data() + static_cast<std::size_t>(y + 1) * (W + 2) + 1);
            }
            for (int j = 0; j < Cout; ++j) {
                T s00 = 0, s01 = 0, s02 = 0, s10 = 0, s11 = 0, s12 = 0, s20 = 0, s21 = 0, s22 = 0;
                const T* up = upstream.plane(j);
                for (int yo = 0; yo < H; ++yo) {
                    const T* u = up + static_cast<std::size_t>(yo) * W;
                    const T* p0 = padded.data() + static_cast<std::size_t>(yo) * (W + 2);
                    const T* p1 = p0 + (W + 2);
                    const T* p2 = p1 + (W + 2);
#pragma omp simd reduction(+ : s00, s01, s02, s10, s11, s12, s20, s21, s22)
                    for (int x = 0; x < W; ++x) {
                        const T uv = u[x];
                        s00 += uv * p0[x];
                        s01 += uv * p0[x + 1];
                        s02 += uv * p0[x + 2];
                        s10 += uv * p1[x];
                        s11 += uv * p1[x + 1];
                        s12 += uv * p1[x + 2];
                        s20 += uv * p2[x];
                        s21 += uv * p2[x + 1];
                        s22 += uv * p2[x + 2];
                    }
                }
                T* gw = g.weights.data() + bank.weight_index(j, i, 0, 0);
                gw[0] = s00;
                gw[1] = s01;
                gw[2] = s02;
                gw[3] = s10;
                gw[4] = s11;
                gw[5] = s12;
                gw[6] = s20;
                gw[7] = s21;
                gw[8] = s22;
            }
        }
    } else {
        for (int yo = 0; yo < H; ++yo) {
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = yo + ky - ph;
                if (iy < 0 || iy >= H) continue;
                for (int i = 0; i < Cin; ++i) {
                    const T* row = input.plane(i) + static_cast<std::size_t>(iy) * W;
                    for (int j = 0; j < Cout; ++j) {
                        const T* u = upstream.plane(j) + static_cast<std::size_t>(yo) * W;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int shift = kx - pw;
                            const int x0 = std::max(0, -shift);
                            const int x1 = std::min(W, W - shift);
                            const T* src = row + shift;
                            T s = T(0);
#pragma omp simd reduction(+ : s)
                            for (int x = x0; x < x1; ++x) s += u[x] * src[x];
                            g.weights[bank.weight_index(j, i, ky, kx)] += s;
                        }
                    }
                }
            }
        }
    }

    if (want_input_grad) {
        g.input = BasicTensor<T>(H, W, Cin);
        std::vector<T> acc(static_cast<std::size_t>(4) * W);
        for (int i0 = 0; i0 < Cin; i0 += 4) {
            const int ib = std::min(4, Cin - i0);
            for (int y = 0; y < H; ++y) {
                std::fill(acc.begin(), acc.end(), T(0));
                T* a0 = acc.data();
                T* a1 = a0 + W;
                T* a2 = a1 + W;
                T* a3 = a2 + W;
                for (int j = 0; j < Cout; ++j) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int uy = y - ky + ph;
                        if (uy < 0 || uy >= H) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int shift = pw - kx;
                            const int x0 = std::max(0, -shift);
                            const int x1 = std::min(W, W - shift);
                            const T* u = upstream.plane(j) + static_cast<std::size_t>(uy) * W + shift;
                            if (ib == 4) {
                                const T w0 = bank.w(j, i0 + 0, ky, kx);
                                const T w1 = bank.w(j, i0 + 1, ky, kx);
                                const T w2 = bank.w(j, i0 + 2, ky, kx);
                                const T w3 = bank.w(j, i0 + 3, ky, kx);
#pragma omp simd
                                for (int x = x0; x < x1; ++x) {
                                    const T s = u[x];
                                    a0[x] += w0 * s;
                                    a1[x] += w1 * s;
                                    a2[x] += w2 * s;
                                    a3[x] += w3 * s;
                                }
                            } else {
                                for (int t = 0; t < ib; ++t) {
                                    const T wv = bank.w(j, i0 + t, ky, kx);
                                    T* a = acc.data() + static_cast<std::size_t>(t) * W;
#pragma omp simd
                                    for (int x = x0; x < x1; ++x) a[x] += wv * u[x];
                                }
                            }
                        }
                    }
                }
                for (int t = 0; t < ib; ++t) {
                    const T* a = acc.data() + static_cast<std::size_t>(t) * W;
                    T* dst = g.input.plane(i0 + t) + static_cast<std::size_t>(y) * W;
                    std::copy(a, a + W, dst);
                }
            }
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.height, input.width, input.channels);
    const std::size_t n = input.data.size();
    for (std::size_t p = 0; p < n; ++p) {
        const T v = input.data[p];
        out.data[p] = v > T(0) ? v : T(0);
    }
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
    if (!input.same_shape(upstream)) {
        throw std::invalid_argument("relu_backward: shape mismatch");
    }
    BasicTensor<T> out(input.height, input.width, input.channels);
    const std::size_t n = input.data.size();
    for (std::size_t p = 0; p < n; ++p) {
        out.data[p] = input.data[p] > T(0) ? upstream.data[p] : T(0);
    }
    return out;
}

template <typename T>
MaxPoolResult<T> maxpool2_forward(const BasicTensor<T>& input) {
    const int H = input.height, W = input.width, C = input.channels;
    MaxPoolResult<T> r;
    r.output = BasicTensor<T>(H, W, C);
    r.argmax.assign(input.data.size(), -1);

    for (int c = 0; c < C; ++c) {
        const T* in = input.plane(c);
        T* out = r.output.plane(c);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                T best = T(0);            // padded cells contribute zero
                std::int32_t best_idx = -1;
                bool seen = false;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        T v;
                        std::int32_t idx;
                        if (yy < H && xx < W) {
                            v = in[static_cast<std::size_t>(yy) * W + xx];
                            idx = static_cast<std::int32_t>(input.index(c, yy, xx));
                        } else {
                            v = T(0);
                            idx = -1;
                        }
                        if (!seen || v > best) {
                            best = v;
                            best_idx = idx;
                            seen = true;
                        }
                    }
                }
                const std::size_t o = input.index(c, y, x);
                out[static_cast<std::size_t>(y) * W + x] = best;
                r.argmax[o] = best_idx;
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const std::vector<std::int32_t>& argmax,
                                 const BasicTensor<T>& upstream) {
    if (argmax.size() != upstream.data.size()) {
        throw std::invalid_argument("maxpool2_backward: argmax size does not match upstream");
    }
    BasicTensor<T> grad(upstream.height, upstream.width, upstream.channels);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        const std::int32_t idx = argmax[o];
        if (idx >= 0) grad.data[static_cast<std::size_t>(idx)] += upstream.data[o];
    }
    return grad;
}

template struct BasicConvKernelBank<float>;
template struct BasicConvKernelBank<double>;

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const BasicConvKernelBank<float>&);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&, const BasicConvKernelBank<double>&);
template ConvGrads<float> conv2d_backward(const BasicTensor<float>&, const BasicConvKernelBank<float>&, const BasicTensor<float>&, bool);
template ConvGrads<double> conv2d_backward(const BasicTensor<double>&, const BasicConvKernelBank<double>&, const BasicTensor<double>&, bool);
template BasicTensor<float> relu_forward(const BasicTensor<float>&);
template BasicTensor<double> relu_forward(const BasicTensor<double>&);
template BasicTensor<float> relu_backward(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> relu_backward(const BasicTensor<double>&, const BasicTensor<double>&);
template MaxPoolResult<float> maxpool2_forward(const BasicTensor<float>&);
template MaxPoolResult<double> maxpool2_forward(const BasicTensor<double>&);
template BasicTensor<float> maxpool2_backward(const std::vector<std::int32_t>&, const BasicTensor<float>&);
template BasicTensor<double> maxpool2_backward(const std::vector<std::int32_t>&, const BasicTensor<double>&);

} // namespace ccdn
