#include "ccdn/model.hpp"

#include <cstdio>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace ccdn {

namespace {

struct LayerShape {
    int kh, kw, cin, cout;
};

constexpr std::array<LayerShape, 6> kCanonicalShapes = {{
    {9, 9, 1, 20},
    {3, 3, 20, 20},
    {3, 3, 20, 20},
    {3, 3, 20, 20},
    {3, 3, 20, 20},
    {3, 3, 20, 1},
}};

template <typename T>
BasicTensor<T> map_to_tensor(const std::vector<T>& values, int h, int w) {
    BasicTensor<T> t(h, w, 1);
    t.data = values;
    return t;
}

} // namespace

template <typename T>
BasicCcdnParams<T> make_canonical_params() {
    BasicCcdnParams<T> p;
    for (std::size_t l = 0; l < 6; ++l) {
        const auto& s = kCanonicalShapes[l];
        p.layers[l] = BasicConvKernelBank<T>(s.kh, s.kw, s.cin, s.cout);
    }
    return p;
}

template <typename T>
BasicCcdnParams<T> init_params(std::uint64_t seed) {
    BasicCcdnParams<T> p = make_canonical_params<T>();
    std::mt19937_64 rng(seed);
    std::normal_distribution<T> gauss(T(0), T(0.1));
    for (auto& layer : p.layers) {
        for (auto& w : layer.weights) w = gauss(rng);
        for (auto& b : layer.biases) b = T(0.1);
    }
    return p;
}

template <typename T>
std::size_t param_count(const BasicCcdnParams<T>& params) {
    std::size_t n = 0;
    for (const auto& layer : params.layers) n += layer.weights.size() + layer.biases.size();
    return n;
}

template <typename T>
void validate_shapes(const BasicCcdnParams<T>& params) {
    for (std::size_t l = 0; l < 6; ++l) {
        const auto& s = kCanonicalShapes[l];
        const auto& b = params.layers[l];
        if (b.kernel_h != s.kh || b.kernel_w != s.kw || b.in_channels != s.cin ||
            b.out_channels != s.cout) {
            char msg[160];
            std::snprintf(msg, sizeof(msg),
                          "layer%zu shape mismatch: expected %dx%dx%d->%d, found %dx%dx%d->%d",
                          l + 1, s.kh, s.kw, s.cin, s.cout, b.kernel_h, b.kernel_w,
                          b.in_channels, b.out_channels);
            throw std::invalid_argument(msg);
        }
        if (b.weights.size() != static_cast<std::size_t>(s.kh) * s.kw * s.cin * s.cout ||
            b.biases.size() != static_cast<std::size_t>(s.cout)) {
            throw std::invalid_argument("layer" + std::to_string(l + 1) +
                                        " weight/bias storage inconsistent with its shape");
        }
    }
}

template <typename T>
ForwardCache<T> forward_cached(const BasicTensor<T>& image, const BasicCcdnParams<T>& params) {
    if (image.channels != 1) {
        throw std::invalid_argument("forward: expected single-channel input, got " +
                                    std::to_string(image.channels) + " channels");
    }
    validate_shapes(params);

    ForwardCache<T> c;
    c.input = image;

    c.pre_activation[0] = conv2d_forward(image, params.layers[0]);
    c.activation[0] = relu_forward(c.pre_activation[0]);
    auto pool1 = maxpool2_forward(c.activation[0]);
    c.pooled1 = std::move(pool1.output);
    c.argmax1 = std::move(pool1.argmax);

    c.pre_activation[1] = conv2d_forward(c.pooled1, params.layers[1]);
    c.activation[1] = relu_forward(c.pre_activation[1]);

    c.pre_activation[2] = conv2d_forward(c.activation[1], params.layers[2]);
    c.activation[2] = relu_forward(c.pre_activation[2]);

    c.pre_activation[3] = conv2d_forward(c.activation[2], params.layers[3]);
    c.activation[3] = relu_forward(c.pre_activation[3]);
    auto pool4 = maxpool2_forward(c.activation[3]);
    c.pooled4 = std::move(pool4.output);
    c.argmax4 = std::move(pool4.argmax);

    c.pre_activation[4] = conv2d_forward(c.pooled4, params.layers[4]);
    c.activation[4] = relu_forward(c.pre_activation[4]);

    c.pre_activation[5] = conv2d_forward(c.activation[4], params.layers[5]);
    c.activation[5] = relu_forward(c.pre_activation[5]);

    c.response.height = image.height;
    c.response.width = image.width;
    c.response.scores = c.activation[5].data;
    return c;
}

template <typename T>
BasicResponseMap<T> forward(const BasicTensor<T>& image, const BasicCcdnParams<T>& params) {
    if (image.channels != 1) {
        throw std::invalid_argument("forward: expected single-channel input, got " +
                                    std::to_string(image.channels) + " channels");
    }
    validate_shapes(params);

    BasicTensor<T> t = relu_forward(conv2d_forward(image, params.layers[0]));
    t = maxpool2_forward(t).output;
    t = relu_forward(conv2d_forward(t, params.layers[1]));
    t = relu_forward(conv2d_forward(t, params.layers[2]));
    t = relu_forward(conv2d_forward(t, params.layers[3]));
    t = maxpool2_forward(t).output;
    t = relu_forward(conv2d_forward(t, params.layers[4]));
    t = relu_forward(conv2d_forward(t, params.layers[5]));

    BasicResponseMap<T> r;
    r.height = image.height;
    r.width = image.width;
    r.scores = std::move(t.data);
    return r;
}

template <typename T>
BasicCcdnParams<T> backward(const ForwardCache<T>& cache, const BasicCcdnParams<T>& params,
                            const std::vector<T>& grad_response) {
    if (grad_response.size() != cache.response.scores.size()) {
        throw std::invalid_argument("backward: grad_response size mismatch");
    }
    BasicCcdnParams<T> grads = make_canonical_params<T>();

    BasicTensor<T> up = map_to_tensor(grad_response, cache.response.height, cache.response.width);

    // layer 6
    up = relu_backward(cache.pre_activation[5], up);
    auto g6 = conv2d_backward(cache.activation[4], params.layers[5], up);
    grads.layers[5].weights = std::move(g6.weights);
    grads.layers[5].biases = std::move(g6.biases);

    // layer 5
    up = relu_backward(cache.pre_activation[4], g6.input);
    auto g5 = conv2d_backward(cache.pooled4, params.layers[4], up);
    grads.layers[4].weights = std::move(g5.weights);
    grads.layers[4].biases = std::move(g5.biases);

    // pool after layer 4, then layer 4
    up = maxpool2_backward(cache.argmax4, g5.input);
    up = relu_backward(cache.pre_activation[3], up);
    auto g4 = conv2d_backward(cache.activation[2], params.layers[3], up);
    grads.layers[3].weights = std::move(g4.weights);
    grads.layers[3].biases = std::move(g4.biases);

    // layer 3
    up = relu_backward(cache.pre_activation[2], g4.input);
    auto g3 = conv2d_backward(cache.activation[1], params.layers[2], up);
    grads.layers[2].weights = std::move(g3.weights);
    grads.layers[2].biases = std::move(g3.biases);

    // layer 2
    up = relu_backward(cache.pre_activation[1], g3.input);
    auto g2 = conv2d_backward(cache.pooled1, params.layers[1], up);
    grads.layers[1].weights = std::move(g2.weights);
    grads.layers[1].biases = std::move(g2.biases);

    // pool after layer 1, then layer 1 (input gradient not needed)
    up = maxpool2_backward(cache.argmax1, g2.input);
    up = relu_backward(cache.pre_activation[0], up);
    auto g1 = conv2d_backward(cache.input, params.layers[0], up, /*want_input_grad=*/false);
    grads.layers[0].weights = std::move(g1.weights);
    grads.layers[0].biases = std::move(g1.biases);

    return grads;
}

BasicCcdnParams<double> to_double(const CcdnParams& params) {
    CcdnParamsD out = make_canonical_params<double>();
    for (std::size_t l = 0; l < 6; ++l) {
        for (std::size_t i = 0; i < params.layers[l].weights.size(); ++i) {
            out.layers[l].weights[i] = static_cast<double>(params.layers[l].weights[i]);
        }
        for (std::size_t i = 0; i < params.layers[l].biases.size(); ++i) {
            out.layers[l].biases[i] = static_cast<double>(params.layers[l].biases[i]);
        }
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'C', 'C', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("weights write failed");
}

bool read_u32(std::FILE* f, std::uint32_t& v) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

void write_f32(std::FILE* f, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(f, bits);
}

bool read_f32(std::FILE* f, float& v) {
    std::uint32_t bits;
    if (!read_u32(f, bits)) return false;
    std::memcpy(&v, &bits, 4);
    return true;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

} // namespace

void save_weights(const CcdnParams& params, const std::filesystem::path& path) {
    validate_shapes(params);
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open weights file for writing: " + path.string());
    if (std::fwrite(kMagic, 1, 4, f.get()) != 4) throw std::runtime_error("weights write failed");
    write_u32(f.get(), kVersion);
    for (const auto& layer : params.layers) {
        write_u32(f.get(), static_cast<std::uint32_t>(layer.kernel_h));
        write_u32(f.get(), static_cast<std::uint32_t>(layer.kernel_w));
        write_u32(f.get(), static_cast<std::uint32_t>(layer.in_channels));
        write_u32(f.get(), static_cast<std::uint32_t>(layer.out_channels));
        for (float w : layer.weights) write_f32(f.get(), w);
        for (float b : layer.biases) write_f32(f.get(), b);
    }
    if (std::fflush(f.get()) != 0) throw std::runtime_error("weights write failed");
}

CcdnParams load_weights(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open weights file: " + path.string());

    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a CCDN weights file: " + path.string());
    }
    std::uint32_t version = 0;
    if (!read_u32(f.get(), version)) throw std::runtime_error("truncated weights file");
    if (version != kVersion) {
        throw std::runtime_error("unsupported weights version " + std::to_string(version));
    }

    CcdnParams params = make_canonical_params<float>();
    for (std::size_t l = 0; l < 6; ++l) {
        std::uint32_t kh, kw, cin, cout;
        if (!read_u32(f.get(), kh) || !read_u32(f.get(), kw) || !read_u32(f.get(), cin) ||
            !read_u32(f.get(), cout)) {
            throw std::runtime_error("truncated weights file (layer" + std::to_string(l + 1) +
                                     " header)");
        }
        const auto& s = kCanonicalShapes[l];
        if (kh != static_cast<std::uint32_t>(s.kh) || kw != static_cast<std::uint32_t>(s.kw) ||
            cin != static_cast<std::uint32_t>(s.cin) ||
            cout != static_cast<std::uint32_t>(s.cout)) {
            char msg[160];
            std::snprintf(msg, sizeof(msg),
                          "layer%zu shape mismatch: expected %dx%dx%d->%d, found %ux%ux%u->%u",
                          l + 1, s.kh, s.kw, s.cin, s.cout, kh, kw, cin, cout);
            throw std::runtime_error(msg);
        }
        auto& layer = params.layers[l];
        for (auto& w : layer.weights) {
            if (!read_f32(f.get(), w)) {
                throw std::runtime_error("truncated weights file (layer" + std::to_string(l + 1) +
                                         " weights)");
            }
        }
        for (auto& b : layer.biases) {
            if (!read_f32(f.get(), b)) {
                throw std::runtime_error("truncated weights file (layer" + std::to_string(l + 1) +
                                         " biases)");
            }
        }
    }
    char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1) {
        throw std::runtime_error("trailing data after weights payload");
    }
    return params;
}

template BasicCcdnParams<float> make_canonical_params<float>();
template BasicCcdnParams<double> make_canonical_params<double>();
template BasicCcdnParams<float> init_params<float>(std::uint64_t);
template BasicCcdnParams<double> init_params<double>(std::uint64_t);
template std::size_t param_count(const BasicCcdnParams<float>&);
template std::size_t param_count(const BasicCcdnParams<double>&);
template void validate_shapes(const BasicCcdnParams<float>&);
template void validate_shapes(const BasicCcdnParams<double>&);
template BasicResponseMap<float> forward(const BasicTensor<float>&, const BasicCcdnParams<float>&);
template BasicResponseMap<double> forward(const BasicTensor<double>&, const BasicCcdnParams<double>&);
template ForwardCache<float> forward_cached(const BasicTensor<float>&, const BasicCcdnParams<float>&);
template ForwardCache<double> forward_cached(const BasicTensor<double>&, const BasicCcdnParams<double>&);
template BasicCcdnParams<float> backward(const ForwardCache<float>&, const BasicCcdnParams<float>&, const std::vector<float>&);
template BasicCcdnParams<double> backward(const ForwardCache<double>&, const BasicCcdnParams<double>&, const std::vector<double>&);

} // namespace ccdn
