#include "ccdn/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace ccdn {

std::vector<Detection> adaptive_threshold(const ResponseMap& map) {
    float maxv = 0;
    for (float s : map.scores) maxv = std::max(maxv, s);
    std::vector<Detection> out;
    if (maxv <= 0) return out;
    const float threshold = maxv / 2;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const float s = map.at(y, x);
            if (s >= threshold) out.push_back({x, y, s});
        }
    }
    return out;
}

double detection_box_iou(const Detection& a, const Detection& b) {
    // 4x4 half-open boxes; overlap along an axis is max(0, 4 - |delta|).
    const int ox = std::max(0, 4 - std::abs(a.x - b.x));
    const int oy = std::max(0, 4 - std::abs(a.y - b.y));
    const int inter = ox * oy;
    return static_cast<double>(inter) / (32 - inter);
}

std::vector<Detection> nms(std::vector<Detection> detections) {
    std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    std::vector<Detection> kept;
    std::vector<char> suppressed(detections.size(), 0);
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (suppressed[i]) continue;
        kept.push_back(detections[i]);
        for (std::size_t j = i + 1; j < detections.size(); ++j) {
            if (suppressed[j]) continue;
            if (std::abs(detections[i].x - detections[j].x) >= 4 ||
                std::abs(detections[i].y - detections[j].y) >= 4) {
                continue;
            }
            if (detection_box_iou(detections[i], detections[j]) > 0.5) suppressed[j] = 1;
        }
    }
    return kept;
}

namespace {

double sq_dist(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

} // namespace

std::vector<Cluster> kmeans_pp(const std::vector<Point2>& points, int k, std::uint64_t seed,
                               std::vector<double>* cost_trace) {
    if (points.empty()) throw std::invalid_argument("kmeans_pp: empty input");
    if (k < 1) throw std::invalid_argument("kmeans_pp: k must be >= 1");
    const int n = static_cast<int>(points.size());
    k = std::min(k, n);

    std::mt19937_64 rng(seed);
    std::vector<Point2> centers;
    centers.reserve(k);
    std::vector<char> is_center(n, 0);
    {
        std::uniform_int_distribution<int> pick(0, n - 1);
        const int first = pick(rng);
        is_center[first] = 1;
        centers.push_back(points[first]);
    }
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, sq_dist(points[i], c));
            d2[i] = best;
            total += best;
        }
        int next = -1;
        if (total > 0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (int i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0) {
                    next = i;
                    break;
                }
            }
            if (next < 0) next = n - 1;   // floating-point slack at the tail
        } else {
            // All points coincide with existing centers; take the first
            // index not already used so seeding stays deterministic.
            for (int i = 0; i < n; ++i) {
                if (!is_center[i]) {
                    next = i;
                    break;
                }
            }
            if (next < 0) next = 0;
        }
        is_center[next] = 1;
        centers.push_back(points[next]);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        double cost = 0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bestd = sq_dist(points[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(points[i], centers[c]);
                if (d < bestd) {   // ties stay with the lower cluster index
                    bestd = d;
                    best = c;
                }
            }
            cost += bestd;
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (cost_trace) cost_trace->push_back(cost);
        if (!changed) break;
        std::vector<double> sx(k, 0), sy(k, 0);
        std::vector<int> count(k, 0);
        for (int i = 0; i < n; ++i) {
            sx[assign[i]] += points[i].x;
            sy[assign[i]] += points[i].y;
            ++count[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (count[c] > 0) centers[c] = {sx[c] / count[c], sy[c] / count[c]};
            // empty clusters keep their previous center
        }
    }

    std::vector<Cluster> clusters(k);
    for (int c = 0; c < k; ++c) clusters[c].centroid = centers[c];
    for (int i = 0; i < n; ++i) clusters[assign[i]].member_indices.push_back(i);
    return clusters;
}

std::vector<Detection> cluster_filter(const std::vector<Detection>& detections, int k,
                                      std::uint64_t seed) {
    if (detections.size() <= 2) return detections;
    std::vector<Point2> pts(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i) {
        pts[i] = {static_cast<double>(detections[i].x), static_cast<double>(detections[i].y)};
    }
    const auto clusters = kmeans_pp(pts, k, seed);
    std::vector<char> keep(detections.size(), 0);
    for (const auto& c : clusters) {
        if (c.size() <= 2) continue;
        for (int idx : c.member_indices) keep[idx] = 1;
    }
    std::vector<Detection> out;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (keep[i]) out.push_back(detections[i]);
    }
    return out;
}

std::vector<Detection> detect(const Tensor& image, const CcdnParams& params,
                              const DetectOptions& options) {
    const ResponseMap response = forward(image, params);
    std::vector<Detection> dets;
    if (options.use_threshold) {
        dets = adaptive_threshold(response);
    } else {
        dets.reserve(response.scores.size());
        for (int y = 0; y < response.height; ++y) {
            for (int x = 0; x < response.width; ++x) dets.push_back({x, y, response.at(y, x)});
        }
    }
    if (options.use_nms) dets = nms(std::move(dets));
    if (options.use_cluster) dets = cluster_filter(dets, options.cluster_k, options.seed);
    return dets;
}

void save_detections(const std::vector<Detection>& detections,
                     const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open detection file for writing: " + path.string());
    std::fputs("x,y,score\n", f);
    for (const auto& d : detections) std::fprintf(f, "%d,%d,%.6f\n", d.x, d.y, d.score);
    if (std::fclose(f) != 0) throw std::runtime_error("detection file write failed");
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open detection file: " + path.string());
    std::vector<Detection> out;
    char line[256];
    int lineno = 0;
    while (std::fgets(line, sizeof(line), f)) {
        ++lineno;
        if (lineno == 1) {
            if (std::string(line).rfind("x,y,score", 0) != 0) {
                std::fclose(f);
                throw std::runtime_error(path.string() + ": missing x,y,score header");
            }
            continue;
        }
        Detection d;
        if (std::sscanf(line, "%d,%d,%f", &d.x, &d.y, &d.score) != 3) {
            std::fclose(f);
            throw std::runtime_error(path.string() + ": malformed detection at line " +
                                     std::to_string(lineno));
        }
        out.push_back(d);
    }
    std::fclose(f);
    return out;
}

} // namespace ccdn
