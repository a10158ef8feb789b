#include "ccdn/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "ccdn/datagen.hpp"
#include "ccdn/image_io.hpp"

namespace ccdn {

MatchResult match(const std::vector<Detection>& detections, const std::vector<Point2>& gt_corners) {
    MatchResult r;
    r.n_gt = static_cast<int>(gt_corners.size());
    r.gt_matches.resize(gt_corners.size());
    r.detections.reserve(detections.size());

    for (std::size_t d = 0; d < detections.size(); ++d) {
        MatchResult::DetMatch m;
        double best = std::numeric_limits<double>::max();
        int best_gt = -1;
        for (std::size_t g = 0; g < gt_corners.size(); ++g) {
            const double dx = detections[d].x - gt_corners[g].x;
            const double dy = detections[d].y - gt_corners[g].y;
            const double dist = std::sqrt(dx * dx + dy * dy);
            if (dist < best) {
                best = dist;
                best_gt = static_cast<int>(g);
            }
        }
        m.distance = gt_corners.empty() ? 0.0 : best;
        if (best_gt >= 0 && best < 5.0) {   // strictly less than five pixels
            m.gt_index = best_gt;
            r.gt_matches[best_gt].push_back(static_cast<int>(d));
        }
        r.detections.push_back(m);
    }
    return r;
}

MetricsReport compute_metrics(const std::vector<MatchResult>& per_image) {
    MetricsReport rep;
    double dist_sum = 0;
    long matched = 0, missed = 0, doubles = 0;
    for (const auto& m : per_image) {
        ++rep.n_images;
        rep.n_gt_corners += m.n_gt;
        rep.n_detections += static_cast<long>(m.detections.size());
        for (const auto& d : m.detections) {
            if (d.gt_index >= 0) {
                dist_sum += d.distance;
                ++matched;
            } else {
                ++rep.false_positives;
            }
        }
        for (const auto& g : m.gt_matches) {
            if (g.empty()) {
                ++missed;
            } else {
                doubles += static_cast<long>(g.size()) - 1;
            }
        }
    }
    if (rep.n_gt_corners == 0) {
        throw std::invalid_argument("compute_metrics: no ground-truth corners in the dataset");
    }
    rep.accuracy_px = matched ? dist_sum / matched : 0.0;
    rep.missed_pct = 100.0 * missed / rep.n_gt_corners;
    rep.double_pct = 100.0 * doubles / rep.n_gt_corners;
    return rep;
}

std::vector<EvalSample> load_external_dataset(
    const std::vector<std::pair<std::filesystem::path, std::filesystem::path>>& pairs) {
    std::vector<EvalSample> out;
    std::string problems;
    for (const auto& [image_path, corner_path] : pairs) {
        try {
            EvalSample s;
            s.image_path = image_path.string();
            s.image = read_pgm(image_path);
            s.corners = load_corners(corner_path);
            out.push_back(std::move(s));
        } catch (const std::exception& e) {
            problems += std::string("\n  ") + e.what();
        }
    }
    if (!problems.empty()) {
        throw std::runtime_error("dataset has unreadable entries:" + problems);
    }
    return out;
}

void save_metrics_report(const MetricsReport& report, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open report for writing: " + path.string());
    std::fprintf(f, "# images=%ld gt_corners=%ld detections=%ld\n", report.n_images,
                 report.n_gt_corners, report.n_detections);
    std::fputs("Accuracy,Missed,Double,FalsePositives\n", f);
    std::fprintf(f, "%.4f,%.4f,%.4f,%ld\n", report.accuracy_px, report.missed_pct,
                 report.double_pct, report.false_positives);
    if (std::fclose(f) != 0) throw std::runtime_error("report write failed: " + path.string());
}

PerImageRow summarize_image(const std::string& name, const MatchResult& m) {
    PerImageRow row;
    row.image = name;
    row.gt = m.n_gt;
    row.detections = static_cast<long>(m.detections.size());
    double dist_sum = 0;
    for (const auto& d : m.detections) {
        if (d.gt_index >= 0) {
            ++row.matched;
            dist_sum += d.distance;
        } else {
            ++row.false_positives;
        }
    }
    for (const auto& g : m.gt_matches) {
        if (g.empty()) {
            ++row.missed;
        } else {
            row.doubles += static_cast<long>(g.size()) - 1;
        }
    }
    row.mean_distance = row.matched ? dist_sum / row.matched : 0.0;
    return row;
}

void save_per_image_breakdown(const std::vector<PerImageRow>& rows,
                              const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open breakdown for writing: " + path.string());
    std::fputs("image,gt,detections,matched,missed,doubles,false_positives,mean_distance\n", f);
    for (const auto& r : rows) {
        std::fprintf(f, "%s,%ld,%ld,%ld,%ld,%ld,%ld,%.4f\n", r.image.c_str(), r.gt, r.detections,
                     r.matched, r.missed, r.doubles, r.false_positives, r.mean_distance);
    }
    if (std::fclose(f) != 0) throw std::runtime_error("breakdown write failed: " + path.string());
}

} // namespace ccdn
