#include "ccdn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ccdn/image_io.hpp"

namespace ccdn {

Homography Homography::translation(double tx, double ty) {
    Homography h;
    h.m = {1, 0, tx, 0, 1, ty, 0, 0, 1};
    return h;
}

Homography Homography::scale(double sx, double sy) {
    Homography h;
    h.m = {sx, 0, 0, 0, sy, 0, 0, 0, 1};
    return h;
}

Homography Homography::rotation(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    Homography h;
    h.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return h;
}

Point2 Homography::apply(const Point2& p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Homography Homography::inverse() const {
    const auto& a = m;
    const double det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
                       a[2] * (a[3] * a[7] - a[4] * a[6]);
    if (std::abs(det) < 1e-14) throw std::invalid_argument("homography is singular");
    Homography r;
    r.m = {(a[4] * a[8] - a[5] * a[7]) / det, (a[2] * a[7] - a[1] * a[8]) / det,
           (a[1] * a[5] - a[2] * a[4]) / det, (a[5] * a[6] - a[3] * a[8]) / det,
           (a[0] * a[8] - a[2] * a[6]) / det, (a[2] * a[3] - a[0] * a[5]) / det,
           (a[3] * a[7] - a[4] * a[6]) / det, (a[1] * a[6] - a[0] * a[7]) / det,
           (a[0] * a[4] - a[1] * a[3]) / det};
    return r;
}

Homography Homography::compose(const Homography& rhs) const {
    Homography r;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * rhs.m[k * 3 + j];
            r.m[i * 3 + j] = s;
        }
    }
    return r;
}

namespace {

float bilinear(const Tensor& img, double x, double y) {
    // pixel centers sit at integer coordinates; clamp to the edge
    const int W = img.width, H = img.height;
    x = std::min(std::max(x, 0.0), static_cast<double>(W - 1));
    y = std::min(std::max(y, 0.0), static_cast<double>(H - 1));
    const int x0 = std::min(static_cast<int>(x), W - 2 >= 0 ? W - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), H - 2 >= 0 ? H - 2 : 0);
    const int x1 = std::min(x0 + 1, W - 1);
    const int y1 = std::min(y0 + 1, H - 1);
    const double fx = x - x0, fy = y - y0;
    const float* p = img.plane(0);
    const double v00 = p[static_cast<std::size_t>(y0) * W + x0];
    const double v01 = p[static_cast<std::size_t>(y0) * W + x1];
    const double v10 = p[static_cast<std::size_t>(y1) * W + x0];
    const double v11 = p[static_cast<std::size_t>(y1) * W + x1];
    return static_cast<float>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                              fy * ((1 - fx) * v10 + fx * v11));
}

Tensor make_background(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> gray(0.15, 0.85);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Tensor bg(h, w, 1);
    // base gradient between two random grays along a random direction
    const double g0 = gray(rng), g1 = gray(rng);
    const double ang = unit(rng) * 2 * M_PI;
    const double dx = std::cos(ang), dy = std::sin(ang);
    const double span = std::abs(dx) * w + std::abs(dy) * h + 1e-9;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double t = (dx * x + dy * y) / span + 0.5;
            t = std::min(std::max(t, 0.0), 1.0);
            bg.at(0, y, x) = static_cast<float>(g0 + (g1 - g0) * t);
        }
    }
    // clutter rectangles
    std::uniform_int_distribution<int> nrect(6, 18);
    const int rects = nrect(rng);
    for (int r = 0; r < rects; ++r) {
        const int rw = 2 + static_cast<int>(unit(rng) * w / 3);
        const int rh = 2 + static_cast<int>(unit(rng) * h / 3);
        const int rx = static_cast<int>(unit(rng) * (w - 1));
        const int ry = static_cast<int>(unit(rng) * (h - 1));
        const float v = static_cast<float>(unit(rng));
        for (int y = ry; y < std::min(h, ry + rh); ++y) {
            for (int x = rx; x < std::min(w, rx + rw); ++x) bg.at(0, y, x) = v;
        }
    }
    // texture noise
    std::uniform_real_distribution<float> tex(-0.02f, 0.02f);
    for (auto& v : bg.data) v = std::min(1.0f, std::max(0.0f, v + tex(rng)));
    return bg;
}

} // namespace

Sample render_board(const BoardSpec& spec, const Homography& pose, int canvas_w, int canvas_h,
                    std::uint64_t background_seed) {
    if (spec.inner_rows < 2 || spec.inner_cols < 2) {
        throw std::invalid_argument("render_board: need at least 2x2 inner corners");
    }
    if (spec.square_size < 4) {
        throw std::invalid_argument("render_board: square_size must be >= 4 px");
    }
    if (spec.border < 0) throw std::invalid_argument("render_board: negative border");

    const int s = spec.square_size;
    const int sq_rows = spec.inner_rows + 1, sq_cols = spec.inner_cols + 1;
    const int bw = (sq_cols + 2 * spec.border) * s;
    const int bh = (sq_rows + 2 * spec.border) * s;

    // the whole board (including margin) must land inside the canvas
    const Point2 outer[4] = {{0, 0},
                             {static_cast<double>(bw), 0},
                             {0, static_cast<double>(bh)},
                             {static_cast<double>(bw), static_cast<double>(bh)}};
    for (const auto& c : outer) {
        const Point2 q = pose.apply(c);
        if (!(q.x >= 0 && q.x <= canvas_w - 1 && q.y >= 0 && q.y <= canvas_h - 1)) {
            throw std::invalid_argument("render_board: board projects outside the canvas");
        }
    }

    std::mt19937_64 rng(background_seed ^ 0xa02bdbf7bb3c0a7ull);
    std::uniform_real_distribution<double> dark(0.02, 0.12), light(0.88, 0.98);
    const float black = static_cast<float>(dark(rng));
    const float white = static_cast<float>(light(rng));

    // board bitmap; pixel (i, j) covers board-space [j, j+1) x [i, i+1)
    Tensor board(bh, bw, 1);
    for (int i = 0; i < bh; ++i) {
        for (int j = 0; j < bw; ++j) {
            const int sr = i / s - spec.border;
            const int sc = j / s - spec.border;
            float v = white;
            if (sr >= 0 && sr < sq_rows && sc >= 0 && sc < sq_cols) {
                v = ((sr + sc) % 2 == 0) ? black : white;
            }
            board.at(0, i, j) = v;
        }
    }

    Sample out;
    out.image = make_background(canvas_w, canvas_h, background_seed);
    const Homography inv = pose.inverse();
    for (int y = 0; y < canvas_h; ++y) {
        for (int x = 0; x < canvas_w; ++x) {
            const Point2 b = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (b.x >= 0.5 && b.x <= bw - 0.5 && b.y >= 0.5 && b.y <= bh - 0.5) {
                out.image.at(0, y, x) = bilinear(board, b.x - 0.5, b.y - 0.5);
            }
        }
    }

    out.corners.reserve(static_cast<std::size_t>(spec.inner_rows) * spec.inner_cols);
    for (int r = 1; r <= spec.inner_rows; ++r) {
        for (int c = 1; c <= spec.inner_cols; ++c) {
            out.corners.push_back(pose.apply({static_cast<double>((spec.border + c) * s),
                                              static_cast<double>((spec.border + r) * s)}));
        }
    }
    return out;
}

Sample rotate(const Sample& sample, int angle_deg) {
    if (angle_deg != 90 && angle_deg != 180 && angle_deg != 270) {
        throw std::invalid_argument("rotate: angle must be 90, 180 or 270 degrees");
    }
    Sample cur = sample;
    for (int turns = angle_deg / 90; turns > 0; --turns) {
        const int W = cur.image.width, H = cur.image.height;
        Sample next;
        next.provenance = cur.provenance;
        next.image = Tensor(W, H, 1);   // dimensions swap
        for (int yp = 0; yp < W; ++yp) {
            for (int xp = 0; xp < H; ++xp) {
                // 90 deg counterclockwise: (x, y) -> (y, W-1-x)
                next.image.at(0, yp, xp) = cur.image.at(0, xp, W - 1 - yp);
            }
        }
        next.corners.reserve(cur.corners.size());
        for (const auto& c : cur.corners) next.corners.push_back({c.y, W - 1 - c.x});
        cur = std::move(next);
    }
    return cur;
}

Sample invert_intensity(const Sample& sample) {
    Sample out = sample;
    for (auto& v : out.image.data) v = 1.0f - v;
    return out;
}

Point2 distort_point(const Point2& p, const DistortParams& d) {
    const double x = (p.x - d.cx) / d.focal;
    const double y = (p.y - d.cy) / d.focal;
    const double r2 = x * x + y * y;
    const double radial = 1 + d.k1 * r2 + d.k2 * r2 * r2;
    const double xd = x * radial + 2 * d.p1 * x * y + d.p2 * (r2 + 2 * x * x);
    const double yd = y * radial + d.p1 * (r2 + 2 * y * y) + 2 * d.p2 * x * y;
    return {xd * d.focal + d.cx, yd * d.focal + d.cy};
}

namespace {

// Jacobian of the normalized forward model at normalized (x, y).
void distort_jacobian(double x, double y, const DistortParams& d, double J[4]) {
    const double r2 = x * x + y * y;
    const double radial = 1 + d.k1 * r2 + d.k2 * r2 * r2;
    const double dr = d.k1 + 2 * d.k2 * r2;   // d(radial)/d(r2)
    J[0] = radial + 2 * x * x * dr + 2 * d.p1 * y + 6 * d.p2 * x;
    J[1] = 2 * x * y * dr + 2 * d.p1 * x + 2 * d.p2 * y;
    J[2] = 2 * x * y * dr + 2 * d.p1 * x + 2 * d.p2 * y;
    J[3] = radial + 2 * y * y * dr + 6 * d.p1 * y + 2 * d.p2 * x;
}

} // namespace

bool undistort_point(const Point2& distorted, const DistortParams& d, Point2& out) {
    const double tx = (distorted.x - d.cx) / d.focal;
    const double ty = (distorted.y - d.cy) / d.focal;
    // 1e-6 normalized units, tightened so the pixel-space residual stays
    // comfortably below 1e-4 px at any focal length
    const double tol = std::min(1e-6, 2e-5 / d.focal);
    double x = tx, y = ty;
    for (int it = 0; it < 20; ++it) {
        const double r2 = x * x + y * y;
        const double radial = 1 + d.k1 * r2 + d.k2 * r2 * r2;
        const double fx = x * radial + 2 * d.p1 * x * y + d.p2 * (r2 + 2 * x * x) - tx;
        const double fy = y * radial + d.p1 * (r2 + 2 * y * y) + 2 * d.p2 * x * y - ty;
        if (std::abs(fx) < tol && std::abs(fy) < tol) {
            out = {x * d.focal + d.cx, y * d.focal + d.cy};
            return true;
        }
        double J[4];
        distort_jacobian(x, y, d, J);
        const double det = J[0] * J[3] - J[1] * J[2];
        if (std::abs(det) < 1e-12) return false;
        x -= (J[3] * fx - J[1] * fy) / det;
        y -= (-J[2] * fx + J[0] * fy) / det;
        if (!std::isfinite(x) || !std::isfinite(y)) return false;
    }
    const double r2 = x * x + y * y;
    const double radial = 1 + d.k1 * r2 + d.k2 * r2 * r2;
    const double fx = x * radial + 2 * d.p1 * x * y + d.p2 * (r2 + 2 * x * x) - tx;
    const double fy = y * radial + d.p1 * (r2 + 2 * y * y) + 2 * d.p2 * x * y - ty;
    if (std::abs(fx) < tol && std::abs(fy) < tol) {
        out = {x * d.focal + d.cx, y * d.focal + d.cy};
        return true;
    }
    return false;
}

Sample distort(const Sample& sample, const DistortParams& params) {
    const int W = sample.image.width, H = sample.image.height;
    if (params.focal <= 0) throw std::invalid_argument("distort: focal must be positive");

    // fold-over check: the forward Jacobian must keep a positive determinant
    // across the image domain
    const int step = std::max(1, std::min(W, H) / 24);
    for (int y = 0; y < H; y += step) {
        for (int x = 0; x < W; x += step) {
            double J[4];
            distort_jacobian((x - params.cx) / params.focal, (y - params.cy) / params.focal,
                             params, J);
            if (J[0] * J[3] - J[1] * J[2] < 1e-9) {
                throw std::invalid_argument("distort: mapping folds over inside the image");
            }
        }
    }

    Sample out;
    out.provenance = sample.provenance;
    out.image = Tensor(H, W, 1);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            Point2 src;
            if (undistort_point({static_cast<double>(x), static_cast<double>(y)}, params, src)) {
                out.image.at(0, y, x) = bilinear(sample.image, src.x, src.y);
            } else {
                out.image.at(0, y, x) = bilinear(sample.image, x, y);
            }
        }
    }
    out.corners.reserve(sample.corners.size());
    for (const auto& c : sample.corners) out.corners.push_back(distort_point(c, params));
    return out;
}

Sample add_noise(const Sample& sample, double sigma, std::uint64_t seed) {
    if (sigma < 0) throw std::invalid_argument("add_noise: sigma must be >= 0");
    Sample out = sample;
    if (sigma == 0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(sigma));
    for (auto& v : out.image.data) v = std::min(1.0f, std::max(0.0f, v + noise(rng)));
    return out;
}

Sample resize(const Sample& sample, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) throw std::invalid_argument("resize: bad target size");
    const int W = sample.image.width, H = sample.image.height;
    if (new_w == W && new_h == H) return sample;

    Sample out;
    out.provenance = sample.provenance;
    out.image = Tensor(new_h, new_w, 1);
    const double sx = static_cast<double>(W) / new_w;
    const double sy = static_cast<double>(H) / new_h;
    for (int y = 0; y < new_h; ++y) {
        for (int x = 0; x < new_w; ++x) {
            out.image.at(0, y, x) = bilinear(sample.image, (x + 0.5) * sx - 0.5,
                                             (y + 0.5) * sy - 0.5);
        }
    }
    out.corners.reserve(sample.corners.size());
    for (const auto& c : sample.corners) {
        out.corners.push_back({(c.x + 0.5) / sx - 0.5, (c.y + 0.5) / sy - 0.5});
    }
    return out;
}

LabelMap make_label_map(const std::vector<Point2>& corners, int width, int height) {
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(width) * height, 0);
    for (const auto& c : corners) {
        const int px = static_cast<int>(std::floor(c.x + 0.5));
        const int py = static_cast<int>(std::floor(c.y + 0.5));
        if (px < 0 || px >= width || py < 0 || py >= height) {
            throw std::invalid_argument("make_label_map: corner outside image bounds");
        }
        labels[static_cast<std::size_t>(py) * width + px] = 1;
    }
    return label_map_from_binary(height, width, std::move(labels));
}

void save_corners(const std::vector<Point2>& corners, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open corner file for writing: " + path.string());
    std::fputs("x,y\n", f);
    for (const auto& c : corners) std::fprintf(f, "%.6f,%.6f\n", c.x, c.y);
    if (std::fclose(f) != 0) throw std::runtime_error("corner file write failed: " + path.string());
}

std::vector<Point2> load_corners(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open corner file: " + path.string());
    std::vector<Point2> out;
    char line[256];
    int lineno = 0;
    while (std::fgets(line, sizeof(line), f)) {
        ++lineno;
        if (lineno == 1) {
            if (std::string(line).rfind("x,y", 0) != 0) {
                std::fclose(f);
                throw std::runtime_error(path.string() + ": missing x,y header");
            }
            continue;
        }
        if (line[0] == '\n' || line[0] == '\0') continue;
        Point2 c;
        if (std::sscanf(line, "%lf,%lf", &c.x, &c.y) != 2) {
            std::fclose(f);
            throw std::runtime_error(path.string() + ": malformed corner at line " +
                                     std::to_string(lineno));
        }
        out.push_back(c);
    }
    std::fclose(f);
    return out;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open manifest for writing: " + path.string());
    std::fputs("image\tcorners\tsplit\tboard\tprovenance\n", f);
    for (const auto& e : manifest.entries) {
        std::fprintf(f, "%s\t%s\t%s\t%s\t%s\n", e.image_path.c_str(), e.corner_path.c_str(),
                     e.split.c_str(), e.board.c_str(), e.provenance.c_str());
    }
    if (std::fclose(f) != 0) throw std::runtime_error("manifest write failed: " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open manifest: " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    char line[1024];
    int lineno = 0;
    while (std::fgets(line, sizeof(line), f)) {
        ++lineno;
        std::string s(line);
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        if (s.empty()) continue;
        if (lineno == 1) {
            if (s.rfind("image\t", 0) != 0) {
                std::fclose(f);
                throw std::runtime_error(path.string() + ": missing manifest header");
            }
            continue;
        }
        ManifestEntry e;
        std::array<std::string*, 5> fields = {&e.image_path, &e.corner_path, &e.split, &e.board,
                                              &e.provenance};
        std::size_t start = 0;
        for (std::size_t k = 0; k < fields.size(); ++k) {
            const std::size_t tab = s.find('\t', start);
            if (tab == std::string::npos && k + 1 < fields.size()) {
                std::fclose(f);
                throw std::runtime_error(path.string() + ": malformed manifest line " +
                                         std::to_string(lineno));
            }
            *fields[k] = s.substr(start, tab == std::string::npos ? std::string::npos
                                                                  : tab - start);
            start = tab == std::string::npos ? s.size() : tab + 1;
        }
        m.entries.push_back(std::move(e));
    }
    std::fclose(f);
    return m;
}

TrainingData load_training_data(const Manifest& manifest) {
    TrainingData data;
    for (const auto& e : manifest.entries) {
        TrainSample s;
        s.image = read_pgm(manifest.base_dir / e.image_path);
        const auto corners = load_corners(manifest.base_dir / e.corner_path);
        s.labels = make_label_map(corners, s.image.width, s.image.height);
        if (e.split == "val") {
            data.validation.push_back(std::move(s));
        } else {
            data.train.push_back(std::move(s));
        }
    }
    return data;
}

std::vector<BoardSpec> parse_board_list(const std::string& csv) {
    std::vector<BoardSpec> out;
    std::size_t start = 0;
    while (start < csv.size()) {
        std::size_t comma = csv.find(',', start);
        if (comma == std::string::npos) comma = csv.size();
        const std::string tok = csv.substr(start, comma - start);
        int rows = 0, cols = 0;
        if (std::sscanf(tok.c_str(), "%dx%d", &rows, &cols) != 2 || rows < 2 || cols < 2) {
            throw std::invalid_argument("bad board spec '" + tok + "' (expected RxC, e.g. 7x7)");
        }
        BoardSpec b;
        b.inner_rows = rows;
        b.inner_cols = cols;
        b.square_size = 0;   // fit-derived
        out.push_back(b);
        start = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty board list");
    return out;
}

namespace {

std::string format_provenance(const BoardSpec& board, int rot, bool inverted,
                              const DistortParams& d, double noise_sigma) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "square=%d;rot=%d;invert=%d;k1=%.4f;k2=%.4f;p1=%.4f;p2=%.4f;noise=%.4f",
                  board.square_size, rot, inverted ? 1 : 0, d.k1, d.k2, d.p1, d.p2, noise_sigma);
    return buf;
}

} // namespace

Manifest generate_dataset(const GenerateConfig& config, const std::filesystem::path& out_dir) {
    if (config.count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
    if (config.boards.empty()) throw std::invalid_argument("generate_dataset: no board specs");

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    std::filesystem::create_directories(out_dir / "labels", ec);
    if (!std::filesystem::is_directory(out_dir / "images") ||
        !std::filesystem::is_directory(out_dir / "labels")) {
        throw std::runtime_error("cannot create output directories under " + out_dir.string());
    }

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Manifest manifest;
    manifest.base_dir = out_dir;

    const int W = config.canvas_w, H = config.canvas_h;
    for (int idx = 0; idx < config.count; ++idx) {
        const std::size_t bi = config.boards.size() == 1
                                   ? 0
                                   : static_cast<std::size_t>(rng() % config.boards.size());
        BoardSpec board = config.boards[bi];

        Sample sample;
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            BoardSpec b = board;
            if (b.square_size == 0) {
                const int fit = std::min((W * 17) / (20 * (b.inner_cols + 1 + 2 * b.border)),
                                         (H * 17) / (20 * (b.inner_rows + 1 + 2 * b.border)));
                if (fit < 4) {
                    throw std::invalid_argument("board " + std::to_string(b.inner_rows) + "x" +
                                                std::to_string(b.inner_cols) +
                                                " does not fit the canvas");
                }
                const int lo = std::max(4, (fit * 3) / 5);
                b.square_size = lo + static_cast<int>(rng() % static_cast<std::uint64_t>(fit - lo + 1));
            }
            const double bw = (b.inner_cols + 1 + 2 * b.border) * b.square_size;
            const double bh = (b.inner_rows + 1 + 2 * b.border) * b.square_size;

            const double theta = unit(rng) * 2 * M_PI;
            const double diag = std::hypot(bw, bh);
            const double max_scale = 0.95 * std::min(W, H) / diag;
            const double scale = std::min(1.0, max_scale) * (0.75 + 0.25 * unit(rng));

            Homography center = Homography::translation(-bw / 2, -bh / 2);
            Homography rs = Homography::rotation(theta).compose(
                Homography::scale(scale, scale));
            Homography persp;
            const double pmag = config.max_perspective / std::max(bw, bh);
            persp.m[6] = (unit(rng) * 2 - 1) * pmag;
            persp.m[7] = (unit(rng) * 2 - 1) * pmag;

            // translate the projected quad to a random in-canvas position
            Homography base = persp.compose(rs.compose(center));
            double minx = 1e30, maxx = -1e30, miny = 1e30, maxy = -1e30;
            const Point2 outer[4] = {{0, 0}, {bw, 0}, {0, bh}, {bw, bh}};
            for (const auto& c : outer) {
                const Point2 q = base.apply(c);
                minx = std::min(minx, q.x);
                maxx = std::max(maxx, q.x);
                miny = std::min(miny, q.y);
                maxy = std::max(maxy, q.y);
            }
            const double spanx = maxx - minx, spany = maxy - miny;
            if (spanx > W - 4 || spany > H - 4) continue;
            const double tx = 2 - minx + unit(rng) * (W - 4 - spanx);
            const double ty = 2 - miny + unit(rng) * (H - 4 - spany);
            const Homography pose = Homography::translation(tx, ty).compose(base);

            const std::uint64_t bg_seed = rng();
            try {
                sample = render_board(b, pose, W, H, bg_seed);
            } catch (const std::invalid_argument&) {
                continue;
            }

            // augmentation cascade
            int rot = 0;
            if (!config.augment.rotation_choices.empty()) {
                rot = config.augment.rotation_choices[rng() % config.augment.rotation_choices.size()];
            }
            if (rot != 0) sample = rotate(sample, rot);

            const bool invert = unit(rng) < config.augment.invert_probability;
            if (invert) sample = invert_intensity(sample);

            DistortParams dist;
            dist.k1 = config.augment.k1_min + unit(rng) * (config.augment.k1_max - config.augment.k1_min);
            dist.k2 = config.augment.k2_min + unit(rng) * (config.augment.k2_max - config.augment.k2_min);
            dist.p1 = config.augment.p1_min + unit(rng) * (config.augment.p1_max - config.augment.p1_min);
            dist.p2 = config.augment.p2_min + unit(rng) * (config.augment.p2_max - config.augment.p2_min);
            dist.cx = (sample.image.width - 1) / 2.0;
            dist.cy = (sample.image.height - 1) / 2.0;
            dist.focal = std::hypot(sample.image.width / 2.0, sample.image.height / 2.0);
            if (dist.k1 != 0 || dist.k2 != 0 || dist.p1 != 0 || dist.p2 != 0) {
                try {
                    sample = distort(sample, dist);
                } catch (const std::invalid_argument&) {
                    continue;   // fold-over: redraw pose and coefficients
                }
            }

            const double sigma = config.augment.noise_sigma_min +
                                 unit(rng) * (config.augment.noise_sigma_max -
                                              config.augment.noise_sigma_min);
            if (sigma > 0) sample = add_noise(sample, sigma, rng());

            if (config.augment.resize_to &&
                (config.augment.resize_to->first != sample.image.width ||
                 config.augment.resize_to->second != sample.image.height)) {
                sample = resize(sample, config.augment.resize_to->first,
                                config.augment.resize_to->second);
            }

            // all corners must stay in frame (distortion can push them out)
            bool in_bounds = true;
            for (const auto& c : sample.corners) {
                if (!(c.x >= 0 && c.x <= sample.image.width - 1 && c.y >= 0 &&
                      c.y <= sample.image.height - 1)) {
                    in_bounds = false;
                    break;
                }
            }
            if (!in_bounds) continue;

            sample.provenance = format_provenance(b, rot, invert, dist, sigma);
            ok = true;
        }
        if (!ok) {
            throw std::runtime_error("generate_dataset: no valid pose found for sample " +
                                     std::to_string(idx));
        }

        char img_rel[64], cor_rel[64];
        std::snprintf(img_rel, sizeof(img_rel), "images/%06d.pgm", idx);
        std::snprintf(cor_rel, sizeof(cor_rel), "labels/%06d.txt", idx);
        write_pgm(sample.image, out_dir / img_rel);
        save_corners(sample.corners, out_dir / cor_rel);

        ManifestEntry e;
        e.image_path = img_rel;
        e.corner_path = cor_rel;
        e.board = std::to_string(board.inner_rows) + "x" + std::to_string(board.inner_cols);
        e.provenance = sample.provenance;
        manifest.entries.push_back(std::move(e));
    }

    // seeded split, paper ratio by default
    const int n_train = static_cast<int>(std::lround(config.count * config.train_fraction));
    std::vector<std::size_t> order(manifest.entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 split_rng(config.seed ^ 0x5851f42d4c957f2dull);
    std::shuffle(order.begin(), order.end(), split_rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
        manifest.entries[order[k]].split = (static_cast<int>(k) < n_train) ? "train" : "val";
    }

    save_manifest(manifest, out_dir / "manifest.tsv");
    return manifest;
}

} // namespace ccdn
