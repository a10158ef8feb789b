#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccdn/postprocess.hpp"
#include "ccdn/tensor.hpp"

namespace ccdn {

/// Detection-to-ground-truth assignment under the 5 px rule: each detection
/// is matched to its nearest corner iff the distance is strictly below 5 px.
/// Every match is retained, so one corner can attract several detections.
struct MatchResult {
    struct DetMatch {
        int gt_index = -1;          // -1 = unmatched (false positive)
        double distance = 0;        // to the nearest corner, matched or not
    };
    std::vector<DetMatch> detections;
    std::vector<std::vector<int>> gt_matches;   // detection indices per corner
    int n_gt = 0;
};

MatchResult match(const std::vector<Detection>& detections, const std::vector<Point2>& gt_corners);

/// Pooled dataset metrics (accuracy over matched detections, missed and
/// double rates over all corners, false-positive count over all detections).
struct MetricsReport {
    double accuracy_px = 0;
    double missed_pct = 0;
    double double_pct = 0;
    long false_positives = 0;
    long n_images = 0;
    long n_gt_corners = 0;
    long n_detections = 0;
};

MetricsReport compute_metrics(const std::vector<MatchResult>& per_image);

struct EvalSample {
    std::string image_path;
    Tensor image;
    std::vector<Point2> corners;
};

/// Loads externally supplied (image, corner-file) pairs. Missing or corrupt
/// files are collected and reported in one error.
std::vector<EvalSample> load_external_dataset(
    const std::vector<std::pair<std::filesystem::path, std::filesystem::path>>& pairs);

/// One record mirroring the published table columns, plus count comments.
void save_metrics_report(const MetricsReport& report, const std::filesystem::path& path);

struct PerImageRow {
    std::string image;
    long gt = 0, detections = 0, matched = 0, missed = 0, doubles = 0, false_positives = 0;
    double mean_distance = 0;
};

PerImageRow summarize_image(const std::string& name, const MatchResult& m);
void save_per_image_breakdown(const std::vector<PerImageRow>& rows,
                              const std::filesystem::path& path);

} // namespace ccdn
