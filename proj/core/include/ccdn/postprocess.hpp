#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ccdn/model.hpp"

namespace ccdn {

struct Detection {
    int x = 0;
    int y = 0;
    float score = 0;
};

struct Point2 {
    double x = 0;
    double y = 0;
};

struct Cluster {
    std::vector<int> member_indices;
    Point2 centroid;

    int size() const { return static_cast<int>(member_indices.size()); }
};

/// Keeps every pixel scoring at least half of the map maximum. An all-zero
/// map yields an empty set.
std::vector<Detection> adaptive_threshold(const ResponseMap& map);

/// Greedy non-maximum suppression over 4x4 boxes centered at each detection
/// ([x-2, x+2) x [y-2, y+2)): sort by score descending (ties by (y, x)
/// ascending), keep the top, drop anything with box IoU > 0.5 against a kept
/// detection.
std::vector<Detection> nms(std::vector<Detection> detections);

/// IoU of the two 4x4 detection boxes; exposed for tests.
double detection_box_iou(const Detection& a, const Detection& b);

/// k-means++ seeding followed by Lloyd iterations until assignments
/// stabilize (at most 100 rounds). k is reduced to the point count when
/// there are fewer points than clusters. When given, cost_trace receives the
/// within-cluster squared-distance objective after every assignment step.
std::vector<Cluster> kmeans_pp(const std::vector<Point2>& points, int k, std::uint64_t seed,
                               std::vector<double>* cost_trace = nullptr);

/// Clusters the detections (k-means++, default k = 10) and removes every
/// detection that fell into a cluster of size <= 2. Sets of <= 2 detections
/// are returned unchanged.
std::vector<Detection> cluster_filter(const std::vector<Detection>& detections, int k = 10,
                                      std::uint64_t seed = 0);

struct DetectOptions {
    bool use_threshold = true;
    bool use_nms = true;
    bool use_cluster = true;
    int cluster_k = 10;
    std::uint64_t seed = 0;
};

/// Full pipeline: forward -> adaptive_threshold -> nms -> cluster_filter.
/// Individual stages can be disabled for ablation.
std::vector<Detection> detect(const Tensor& image, const CcdnParams& params,
                              const DetectOptions& options = {});

/// Text serialization: one-line header "x,y,score", one detection per line.
void save_detections(const std::vector<Detection>& detections,
                     const std::filesystem::path& path);
std::vector<Detection> load_detections(const std::filesystem::path& path);

} // namespace ccdn
