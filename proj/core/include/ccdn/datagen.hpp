#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ccdn/postprocess.hpp"   // Point2
#include "ccdn/tensor.hpp"
#include "ccdn/training.hpp"      // LabelMap

namespace ccdn {

/// Checkerboard geometry. The five preset grids are 7x7, 6x9, 7x11, 9x9 and
/// 12x13 inner corners; square_size is the side of one square in board-space
/// pixels and border the white margin width in squares.
struct BoardSpec {
    int inner_rows = 7;
    int inner_cols = 7;
    int square_size = 16;
    int border = 1;
};

/// Row-major 3x3 homography acting on (x, y, 1) column vectors.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return {}; }
    static Homography translation(double tx, double ty);
    static Homography scale(double sx, double sy);
    static Homography rotation(double radians);

    Point2 apply(const Point2& p) const;
    Homography inverse() const;
    /// this * rhs (apply rhs first).
    Homography compose(const Homography& rhs) const;
};

struct Sample {
    Tensor image;                    // H x W x 1, values in [0, 1]
    std::vector<Point2> corners;     // ground-truth inner corners, pixel coords
    std::string provenance;          // applied-augmentation record
};

/// Renders the board under `pose` (board space -> canvas pixel space) over a
/// procedurally cluttered background. Corner ground truth is the exact image
/// of the board lattice under the pose. Throws if the board quadrilateral
/// leaves the canvas.
Sample render_board(const BoardSpec& spec, const Homography& pose, int canvas_w, int canvas_h,
                    std::uint64_t background_seed);

/// Right-angle rotation (90/180/270 degrees, counterclockwise); a lossless
/// pixel permutation with the corner coordinates mapped accordingly.
Sample rotate(const Sample& sample, int angle_deg);

Sample invert_intensity(const Sample& sample);

struct DistortParams {
    double k1 = 0, k2 = 0;   // radial
    double p1 = 0, p2 = 0;   // tangential
    double cx = 0, cy = 0;   // distortion center, pixel coords
    double focal = 1;        // pixels-per-normalized-unit
};

/// Brown-Conrady distortion: corners are forward-mapped analytically, the
/// image is resampled through the Newton-inverted mapping (<= 20 steps,
/// tolerance 1e-6 normalized units). Throws when the mapping folds over
/// inside the image domain.
Sample distort(const Sample& sample, const DistortParams& params);

/// Forward map of a single point, exposed for tests and corner transport.
Point2 distort_point(const Point2& p, const DistortParams& params);
/// Inverse map (Newton); returns false when the iteration fails to converge.
bool undistort_point(const Point2& distorted, const DistortParams& params, Point2& out);

/// Adds i.i.d. Gaussian noise (sigma in [0,1] gray levels), clamped to [0,1].
Sample add_noise(const Sample& sample, double sigma, std::uint64_t seed);

/// Bilinear resize with corner coordinates rescaled to match.
Sample resize(const Sample& sample, int new_w, int new_h);

/// Binary label map: 1 at each corner rounded half-up to the nearest pixel.
LabelMap make_label_map(const std::vector<Point2>& corners, int width, int height);

struct AugmentConfig {
    std::vector<int> rotation_choices{0, 90, 180, 270};
    double invert_probability = 0.5;
    double k1_min = -0.4, k1_max = 0.4;
    double k2_min = -0.1, k2_max = 0.1;
    double p1_min = -0.01, p1_max = 0.01;
    double p2_min = -0.01, p2_max = 0.01;
    double noise_sigma_min = 0.0, noise_sigma_max = 0.04;
    std::optional<std::pair<int, int>> resize_to = std::pair<int, int>{640, 480};
};

struct GenerateConfig {
    std::vector<BoardSpec> boards;      // square_size 0 = fit-derived random
    int count = 100;
    int canvas_w = 640, canvas_h = 480;
    double train_fraction = 8000.0 / 8900.0;
    double max_perspective = 0.35;      // projective tilt strength, 0 = affine
    AugmentConfig augment;
    std::uint64_t seed = 0;
};

struct ManifestEntry {
    std::string image_path;    // relative to the manifest directory
    std::string corner_path;
    std::string split;         // "train" | "val"
    std::string board;         // e.g. "7x7"
    std::string provenance;
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;
};

/// Renders `count` augmented samples into out_dir (images/, labels/ and
/// manifest.tsv) with a seeded train/validation split. Bit-reproducible for
/// a fixed config.
Manifest generate_dataset(const GenerateConfig& config, const std::filesystem::path& out_dir);

void save_corners(const std::vector<Point2>& corners, const std::filesystem::path& path);
std::vector<Point2> load_corners(const std::filesystem::path& path);

void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

/// Loads manifest entries into training samples (label maps built from the
/// corner files). `split` filters entries; empty loads everything.
TrainingData load_training_data(const Manifest& manifest);
std::vector<BoardSpec> parse_board_list(const std::string& csv);

} // namespace ccdn
