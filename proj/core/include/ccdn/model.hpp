#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ccdn/nn_ops.hpp"
#include "ccdn/tensor.hpp"

namespace ccdn {

/// The six convolution banks of the corner detection net:
/// 9x9x1->20, then four 3x3x20->20, then 3x3x20->1. 16301 scalars total.
template <typename T>
struct BasicCcdnParams {
    std::array<BasicConvKernelBank<T>, 6> layers;
};

using CcdnParams = BasicCcdnParams<float>;
using CcdnParamsD = BasicCcdnParams<double>;

/// Per-pixel corner scores; same dimensions as the input image, all >= 0.
template <typename T>
struct BasicResponseMap {
    int height = 0;
    int width = 0;
    std::vector<T> scores;

    T& at(int y, int x) { return scores[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int y, int x) const { return scores[static_cast<std::size_t>(y) * width + x]; }
};

using ResponseMap = BasicResponseMap<float>;
using ResponseMapD = BasicResponseMap<double>;

/// Zero-valued parameters with the canonical layer shapes.
template <typename T>
BasicCcdnParams<T> make_canonical_params();

/// Weights ~ N(0, 0.1^2), biases = 0.1, deterministic for a given seed.
template <typename T>
BasicCcdnParams<T> init_params(std::uint64_t seed);

template <typename T>
std::size_t param_count(const BasicCcdnParams<T>& params);

/// Throws if any layer deviates from the canonical shapes; names the layer.
template <typename T>
void validate_shapes(const BasicCcdnParams<T>& params);

/// Full inference: conv1-relu-pool, conv2-relu, conv3-relu, conv4-relu-pool,
/// conv5-relu, conv6-relu. Input must be single-channel.
template <typename T>
BasicResponseMap<T> forward(const BasicTensor<T>& image, const BasicCcdnParams<T>& params);

/// Everything backward() needs: pre-activation outputs, pooled activations
/// and the pool routing indices.
template <typename T>
struct ForwardCache {
    BasicTensor<T> input;
    std::array<BasicTensor<T>, 6> pre_activation;   // conv outputs before ReLU
    std::array<BasicTensor<T>, 6> activation;       // after ReLU
    BasicTensor<T> pooled1, pooled4;                // after the two pools
    std::vector<std::int32_t> argmax1, argmax4;
    BasicResponseMap<T> response;
};

template <typename T>
ForwardCache<T> forward_cached(const BasicTensor<T>& image, const BasicCcdnParams<T>& params);

/// Parameter gradients reuse the CcdnParams layout (one value per scalar).
template <typename T>
BasicCcdnParams<T> backward(const ForwardCache<T>& cache, const BasicCcdnParams<T>& params,
                            const std::vector<T>& grad_response);

BasicCcdnParams<double> to_double(const CcdnParams& params);

/// Binary weights file: magic "CCDN", u32 version, then per layer the four
/// u32 dims (kh, kw, in, out), weights as little-endian f32 in
/// [out][in][row][col] order, then the biases. Round-trips bit-exactly.
void save_weights(const CcdnParams& params, const std::filesystem::path& path);
CcdnParams load_weights(const std::filesystem::path& path);

// Element-wise parameter walk in the fixed flattening order
// (layer 1..6, weights then biases). Shared by the optimizer, the
// regularizer and the gradient checker.
template <typename T, typename Fn>
void for_each_param(BasicCcdnParams<T>& params, Fn&& fn) {
    for (auto& layer : params.layers) {
        for (auto& v : layer.weights) fn(v);
        for (auto& v : layer.biases) fn(v);
    }
}

template <typename T, typename Fn>
void for_each_param(const BasicCcdnParams<T>& params, Fn&& fn) {
    for (const auto& layer : params.layers) {
        for (const auto& v : layer.weights) fn(v);
        for (const auto& v : layer.biases) fn(v);
    }
}

} // namespace ccdn
