#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ccdn/datagen.hpp"
#include "ccdn/image_io.hpp"
#include "support/saddle.hpp"

using namespace ccdn;

namespace {

std::filesystem::path temp_dir(const char* name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

BoardSpec board7x7(int square = 16) {
    BoardSpec b;
    b.inner_rows = 7;
    b.inner_cols = 7;
    b.square_size = square;
    b.border = 1;
    return b;
}

} // namespace

TEST_SUITE_BEGIN("datagen");

TEST_CASE("identity pose places 49 corners on the exact lattice") {
    const auto spec = board7x7();
    const auto s = render_board(spec, Homography::identity(), 200, 200, 1);
    REQUIRE(s.corners.size() == 49u);
    std::size_t i = 0;
    for (int r = 1; r <= 7; ++r) {
        for (int c = 1; c <= 7; ++c, ++i) {
            CHECK(s.corners[i].x == (1 + c) * 16.0);
            CHECK(s.corners[i].y == (1 + r) * 16.0);
        }
    }
}

TEST_CASE("pure translation shifts every corner by the same offset") {
    const auto spec = board7x7();
    const auto base = render_board(spec, Homography::identity(), 240, 240, 2);
    const auto moved = render_board(spec, Homography::translation(17.25, 9.5), 240, 240, 2);
    REQUIRE(base.corners.size() == moved.corners.size());
    for (std::size_t i = 0; i < base.corners.size(); ++i) {
        CHECK(moved.corners[i].x == doctest::Approx(base.corners[i].x + 17.25).epsilon(1e-12));
        CHECK(moved.corners[i].y == doctest::Approx(base.corners[i].y + 9.5).epsilon(1e-12));
    }
}

TEST_CASE("render rejects a pose that leaves the canvas") {
    const auto spec = board7x7();
    CHECK_THROWS_AS(render_board(spec, Homography::translation(150, 0), 200, 200, 1),
                    std::invalid_argument);
}

TEST_CASE("rendered corners agree with the saddle-point oracle") {
    const auto spec = board7x7();
    // mildly rotated perspective pose, comfortably inside a 280x280 canvas
    Homography pose = Homography::translation(140, 140)
                          .compose(Homography::rotation(0.25))
                          .compose(Homography::translation(-72, -72));
    pose.m[6] = 4e-4;
    pose.m[7] = -2.5e-4;
    const auto s = render_board(spec, pose, 280, 280, 3);
    REQUIRE(s.corners.size() == 49u);

    int checked = 0;
    for (const auto& c : s.corners) {
        const int px = static_cast<int>(std::lround(c.x));
        const int py = static_cast<int>(std::lround(c.y));
        const auto found = oracle::saddle_point(s.image, px, py, 3);
        REQUIRE(found.has_value());
        const double err = std::hypot(found->x - c.x, found->y - c.y);
        CHECK(err < 0.5);
        ++checked;
    }
    CHECK(checked == 49);
}

TEST_CASE("four 90-degree rotations are the identity") {
    const auto spec = board7x7(12);
    const auto s = render_board(spec, Homography::translation(10, 20), 180, 160, 4);
    Sample r = s;
    for (int i = 0; i < 4; ++i) r = rotate(r, 90);
    CHECK(r.image.data == s.image.data);
    for (std::size_t i = 0; i < s.corners.size(); ++i) {
        CHECK(r.corners[i].x == doctest::Approx(s.corners[i].x).epsilon(1e-12));
        CHECK(r.corners[i].y == doctest::Approx(s.corners[i].y).epsilon(1e-12));
    }
}

TEST_CASE("180-degree rotation maps (x, y) to (w-1-x, h-1-y)") {
    const auto spec = board7x7(12);
    const auto s = render_board(spec, Homography::translation(8, 12), 170, 150, 5);
    const auto r = rotate(s, 180);
    CHECK(r.image.width == s.image.width);
    CHECK(r.image.height == s.image.height);
    for (std::size_t i = 0; i < s.corners.size(); ++i) {
        CHECK(r.corners[i].x == doctest::Approx(170 - 1 - s.corners[i].x).epsilon(1e-12));
        CHECK(r.corners[i].y == doctest::Approx(150 - 1 - s.corners[i].y).epsilon(1e-12));
    }
    CHECK_THROWS_AS(rotate(s, 45), std::invalid_argument);
}

TEST_CASE("rotation and inversion commute with label geometry") {
    const auto spec = board7x7(10);
    const auto base = render_board(spec, Homography::translation(6, 9), 130, 120, 6);
    for (const int angle : {0, 90, 180, 270}) {
        for (const bool inverted : {false, true}) {
            Sample t = base;
            if (angle != 0) t = rotate(t, angle);
            if (inverted) t = invert_intensity(t);

            // label map built from transformed corners == transformed label map
            const LabelMap direct =
                make_label_map(t.corners, t.image.width, t.image.height);
            LabelMap routed = make_label_map(base.corners, 130, 120);
            if (angle != 0) {
                // rotate the label map via a sample carrying it as an image
                Sample lm;
                lm.image = Tensor(120, 130, 1);
                for (std::size_t i = 0; i < routed.labels.size(); ++i) {
                    lm.image.data[i] = routed.labels[i];
                }
                lm.corners = {};
                const Sample lr = rotate(lm, angle);
                std::vector<std::uint8_t> bits(lr.image.data.size());
                for (std::size_t i = 0; i < bits.size(); ++i) {
                    bits[i] = lr.image.data[i] > 0.5f ? 1 : 0;
                }
                routed = label_map_from_binary(lr.image.height, lr.image.width, std::move(bits));
            }
            CHECK(direct.labels == routed.labels);
            CHECK(direct.n_positive == 49);
        }
    }
}

TEST_CASE("intensity inversion is an involution and leaves corners alone") {
    const auto spec = board7x7(12);
    const auto s = render_board(spec, Homography::translation(15, 15), 180, 180, 7);
    const auto inv = invert_intensity(s);
    for (std::size_t i = 0; i < s.corners.size(); ++i) {
        CHECK(inv.corners[i].x == s.corners[i].x);
        CHECK(inv.corners[i].y == s.corners[i].y);
    }
    const auto twice = invert_intensity(inv);
    for (std::size_t i = 0; i < s.image.data.size(); ++i) {
        // 1 - (1 - v) loses bits below the ulp of 1.0 for v near zero
        CHECK(std::abs(twice.image.data[i] - s.image.data[i]) <= 1e-7f);
    }

    Sample white;
    white.image = Tensor(4, 4, 1, 1.0f);
    const auto black = invert_intensity(white);
    for (float v : black.image.data) CHECK(v == 0.0f);
}

TEST_CASE("distortion model point mapping") {
    DistortParams d;
    d.k1 = 0.1;
    d.focal = 1.0;   // normalized == pixel units
    d.cx = 0.0;
    d.cy = 0.0;
    const Point2 unit = distort_point({1.0, 0.0}, d);
    CHECK(unit.x == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(unit.y == doctest::Approx(0.0).epsilon(1e-12));
    const Point2 center = distort_point({0.0, 0.0}, d);
    CHECK(center.x == 0.0);
    CHECK(center.y == 0.0);
}

TEST_CASE("zero-coefficient distortion is the identity") {
    const auto spec = board7x7(12);
    const auto s = render_board(spec, Homography::translation(20, 20), 190, 190, 8);
    DistortParams d;
    d.cx = 94.5;
    d.cy = 94.5;
    d.focal = 130;
    const auto out = distort(s, d);
    for (std::size_t i = 0; i < s.image.data.size(); ++i) {
        CHECK(std::abs(out.image.data[i] - s.image.data[i]) <= 1e-6f);
    }
    for (std::size_t i = 0; i < s.corners.size(); ++i) {
        CHECK(out.corners[i].x == s.corners[i].x);
        CHECK(out.corners[i].y == s.corners[i].y);
    }
}

TEST_CASE("forward-then-inverse distortion returns within 1e-4 px") {
    DistortParams d;
    d.k1 = 0.2;
    d.k2 = -0.04;
    d.p1 = 0.004;
    d.p2 = -0.006;
    d.cx = 80;
    d.cy = 60;
    d.focal = 100;
    std::mt19937_64 rng(139);
    std::uniform_real_distribution<double> ux(0, 160), uy(0, 120);
    for (int trial = 0; trial < 300; ++trial) {
        const Point2 p{ux(rng), uy(rng)};
        const Point2 fwd = distort_point(p, d);
        Point2 back;
        REQUIRE(undistort_point(fwd, d, back));
        CHECK(std::hypot(back.x - p.x, back.y - p.y) < 1e-4);
    }
}

TEST_CASE("fold-over coefficients are rejected") {
    Sample s;
    s.image = Tensor(100, 100, 1, 0.5f);
    DistortParams d;
    d.k1 = -1.4;   // strong barrel: radius collapses inside the frame
    d.cx = 49.5;
    d.cy = 49.5;
    d.focal = 50;
    CHECK_THROWS_AS(distort(s, d), std::invalid_argument);
}

TEST_CASE("gaussian noise: identity at sigma 0, reproducible, zero-mean") {
    Sample s;
    s.image = Tensor(120, 160, 1, 0.5f);
    const auto same = add_noise(s, 0.0, 9);
    CHECK(same.image.data == s.image.data);

    const auto a = add_noise(s, 0.02, 1234);
    const auto b = add_noise(s, 0.02, 1234);
    CHECK(a.image.data == b.image.data);

    double mean = 0;
    for (std::size_t i = 0; i < a.image.data.size(); ++i) {
        mean += (a.image.data[i] - s.image.data[i]);
    }
    mean /= a.image.data.size();
    const double bound = 3 * 0.02 / std::sqrt(static_cast<double>(a.image.data.size()));
    CHECK(std::abs(mean) < bound);
}

TEST_CASE("label map rounding and counting") {
    const LabelMap m = make_label_map({{10.4, 20.6}}, 32, 32);
    CHECK(m.n_positive == 1);
    CHECK(m.at(21, 10) == 1);

    const LabelMap empty = make_label_map({}, 8, 8);
    CHECK(empty.n_positive == 0);
    CHECK(empty.n_negative == 64);

    const auto spec = board7x7(12);
    const auto s = render_board(spec, Homography::translation(20, 20), 190, 190, 10);
    const LabelMap grid = make_label_map(s.corners, 190, 190);
    CHECK(grid.n_positive == 49);

    CHECK_THROWS_AS(make_label_map({{-3.0, 4.0}}, 8, 8), std::invalid_argument);
}

TEST_CASE("pgm io round-trips bytes exactly") {
    std::mt19937_64 rng(149);
    Tensor img(13, 17, 1);
    for (auto& v : img.data) v = static_cast<float>(rng() % 256) / 255.0f;
    const auto dir = temp_dir("ccdn_pgm_test");
    write_pgm(img, dir / "a.pgm");
    const Tensor back = read_pgm(dir / "a.pgm");
    CHECK(back.data == img.data);
    write_pgm(back, dir / "b.pgm");
    CHECK(slurp(dir / "a.pgm") == slurp(dir / "b.pgm"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("corner files round-trip and reject malformed lines") {
    const auto dir = temp_dir("ccdn_corner_test");
    const std::vector<Point2> corners{{1.5, 2.25}, {100.0, 3.125}};
    save_corners(corners, dir / "c.txt");
    const auto loaded = load_corners(dir / "c.txt");
    REQUIRE(loaded.size() == 2u);
    CHECK(loaded[0].x == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(loaded[1].y == doctest::Approx(3.125).epsilon(1e-9));

    std::ofstream bad(dir / "bad.txt");
    bad << "x,y\n1.0,2.0\nnot-a-corner\n";
    bad.close();
    try {
        load_corners(dir / "bad.txt");
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("generate_dataset is byte-reproducible and well-formed") {
    GenerateConfig cfg;
    cfg.boards = parse_board_list("7x7,6x9");
    cfg.count = 20;
    cfg.canvas_w = 160;
    cfg.canvas_h = 120;
    cfg.seed = 99;
    cfg.augment.resize_to.reset();
    cfg.augment.k1_min = -0.05;
    cfg.augment.k1_max = 0.05;
    cfg.augment.k2_min = cfg.augment.k2_max = 0.0;
    cfg.augment.p1_min = cfg.augment.p1_max = 0.0;
    cfg.augment.p2_min = cfg.augment.p2_max = 0.0;
    cfg.augment.noise_sigma_max = 0.01;

    const auto dir_a = temp_dir("ccdn_gen_a");
    const auto dir_b = temp_dir("ccdn_gen_b");
    const Manifest ma = generate_dataset(cfg, dir_a);
    const Manifest mb = generate_dataset(cfg, dir_b);
    REQUIRE(ma.entries.size() == 20u);
    CHECK(slurp(dir_a / "manifest.tsv") == slurp(dir_b / "manifest.tsv"));
    for (const auto& e : ma.entries) {
        CHECK(slurp(dir_a / e.image_path) == slurp(dir_b / e.image_path));
        CHECK(slurp(dir_a / e.corner_path) == slurp(dir_b / e.corner_path));
    }

    // every corner parses and lies in bounds; labels are loadable
    for (const auto& e : ma.entries) {
        const Tensor img = read_pgm(dir_a / e.image_path);
        const auto corners = load_corners(dir_a / e.corner_path);
        CHECK(!corners.empty());
        for (const auto& c : corners) {
            CHECK(c.x >= 0);
            CHECK(c.y >= 0);
            CHECK(c.x <= img.width - 1);
            CHECK(c.y <= img.height - 1);
        }
    }

    // manifest loader round-trip
    const Manifest loaded = load_manifest(dir_a / "manifest.tsv");
    REQUIRE(loaded.entries.size() == ma.entries.size());
    CHECK(loaded.entries[0].image_path == ma.entries[0].image_path);
    CHECK(loaded.entries[0].split == ma.entries[0].split);

    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("train/validation split follows the requested ratio") {
    GenerateConfig cfg;
    cfg.boards = parse_board_list("7x7");
    cfg.count = 100;
    cfg.canvas_w = 120;
    cfg.canvas_h = 100;
    cfg.seed = 7;
    cfg.augment.resize_to.reset();
    cfg.augment.k1_min = cfg.augment.k1_max = 0.0;
    cfg.augment.k2_min = cfg.augment.k2_max = 0.0;
    cfg.augment.p1_min = cfg.augment.p1_max = 0.0;
    cfg.augment.p2_min = cfg.augment.p2_max = 0.0;
    cfg.augment.noise_sigma_max = 0.0;

    const auto dir = temp_dir("ccdn_gen_split");
    const Manifest m = generate_dataset(cfg, dir);
    int train = 0, val = 0;
    for (const auto& e : m.entries) (e.split == "train" ? train : val) += 1;
    CHECK(train == 90);   // round(100 * 8000 / 8900)
    CHECK(val == 10);
    std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
