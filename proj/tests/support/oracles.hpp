#pragma once

// Independent reference implementations the unit tests check the library
// against. Everything here is written directly from the operation
// definitions (naive loops, no shared code with the production kernels).

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ccdn/nn_ops.hpp"
#include "ccdn/postprocess.hpp"
#include "ccdn/tensor.hpp"

namespace oracle {

template <typename T>
ccdn::BasicTensor<T> naive_conv2d(const ccdn::BasicTensor<T>& in,
                                  const ccdn::BasicConvKernelBank<T>& bank) {
    const int H = in.height, W = in.width;
    const int ph = (bank.kernel_h - 1) / 2, pw = (bank.kernel_w - 1) / 2;
    ccdn::BasicTensor<T> out(H, W, bank.out_channels);
    for (int j = 0; j < bank.out_channels; ++j) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double acc = 0;
                for (int ky = 0; ky < bank.kernel_h; ++ky) {
                    for (int kx = 0; kx < bank.kernel_w; ++kx) {
                        for (int i = 0; i < bank.in_channels; ++i) {
                            const int yy = y + ky - ph, xx = x + kx - pw;
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                            acc += static_cast<double>(bank.w(j, i, ky, kx)) * in.at(i, yy, xx);
                        }
                    }
                }
                out.at(j, y, x) = static_cast<T>(acc + bank.biases[j]);
            }
        }
    }
    return out;
}

template <typename T>
ccdn::BasicTensor<T> naive_maxpool2(const ccdn::BasicTensor<T>& in) {
    ccdn::BasicTensor<T> out(in.height, in.width, in.channels);
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                double best = -1e300;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        const double v = (yy < in.height && xx < in.width)
                                             ? static_cast<double>(in.at(c, yy, xx))
                                             : 0.0;
                        best = std::max(best, v);
                    }
                }
                out.at(c, y, x) = static_cast<T>(best);
            }
        }
    }
    return out;
}

inline std::vector<ccdn::Detection> brute_force_threshold(const ccdn::ResponseMap& map) {
    float maxv = 0;
    for (float s : map.scores) maxv = std::max(maxv, s);
    std::vector<ccdn::Detection> out;
    if (maxv == 0) return out;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (map.at(y, x) >= maxv / 2) out.push_back({x, y, map.at(y, x)});
        }
    }
    return out;
}

// Greedy NMS written from the rule text: boxes [x-2,x+2) x [y-2,y+2),
// suppress IoU > 0.5, scores descending with (y, x) tie-break.
inline std::vector<ccdn::Detection> reference_nms(std::vector<ccdn::Detection> dets) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const ccdn::Detection& a, const ccdn::Detection& b) {
                         if (a.score != b.score) return a.score > b.score;
                         if (a.y != b.y) return a.y < b.y;
                         return a.x < b.x;
                     });
    std::vector<ccdn::Detection> kept;
    for (const auto& d : dets) {
        bool suppressed = false;
        for (const auto& k : kept) {
            const double ax0 = d.x - 2, ax1 = d.x + 2, ay0 = d.y - 2, ay1 = d.y + 2;
            const double bx0 = k.x - 2, bx1 = k.x + 2, by0 = k.y - 2, by1 = k.y + 2;
            const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
            const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
            const double inter = iw * ih;
            const double iou = inter / (16.0 + 16.0 - inter);
            if (iou > 0.5) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

inline double kmeans_cost(const std::vector<ccdn::Point2>& pts,
                          const std::vector<ccdn::Cluster>& clusters) {
    double cost = 0;
    for (const auto& c : clusters) {
        for (int idx : c.member_indices) {
            const double dx = pts[idx].x - c.centroid.x, dy = pts[idx].y - c.centroid.y;
            cost += dx * dx + dy * dy;
        }
    }
    return cost;
}

// Optimal k-partition cost by exhaustive assignment enumeration (points
// assigned to k groups; each group's cost is variance around its mean).
inline double brute_force_optimal_kmeans_cost(const std::vector<ccdn::Point2>& pts, int k) {
    const int n = static_cast<int>(pts.size());
    long total = 1;
    for (int i = 0; i < n; ++i) total *= k;
    double best = 1e300;
    std::vector<int> assign(n);
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = 0; i < n; ++i) {
            assign[i] = static_cast<int>(c % k);
            c /= k;
        }
        double cost = 0;
        for (int g = 0; g < k; ++g) {
            double sx = 0, sy = 0;
            int cnt = 0;
            for (int i = 0; i < n; ++i) {
                if (assign[i] == g) {
                    sx += pts[i].x;
                    sy += pts[i].y;
                    ++cnt;
                }
            }
            if (!cnt) continue;
            const double mx = sx / cnt, my = sy / cnt;
            for (int i = 0; i < n; ++i) {
                if (assign[i] == g) {
                    cost += (pts[i].x - mx) * (pts[i].x - mx) + (pts[i].y - my) * (pts[i].y - my);
                }
            }
        }
        best = std::min(best, cost);
    }
    return best;
}

template <typename T>
ccdn::BasicTensor<T> random_tensor(int h, int w, int c, std::mt19937_64& rng, T lo = T(-1),
                                   T hi = T(1)) {
    ccdn::BasicTensor<T> t(h, w, c);
    std::uniform_real_distribution<T> u(lo, hi);
    for (auto& v : t.data) v = u(rng);
    return t;
}

template <typename T>
ccdn::BasicConvKernelBank<T> random_bank(int kh, int kw, int cin, int cout,
                                         std::mt19937_64& rng) {
    ccdn::BasicConvKernelBank<T> b(kh, kw, cin, cout);
    std::uniform_real_distribution<T> u(T(-1), T(1));
    for (auto& v : b.weights) v = u(rng);
    for (auto& v : b.biases) v = u(rng);
    return b;
}

} // namespace oracle
