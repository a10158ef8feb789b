#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ccdn/model.hpp"
#include "ccdn/postprocess.hpp"
#include "support/oracles.hpp"

using namespace ccdn;

namespace {

ResponseMap map_of(std::initializer_list<float> values, int h, int w) {
    ResponseMap r;
    r.height = h;
    r.width = w;
    r.scores = values;
    return r;
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    auto key = [](const Detection& d) { return std::tuple(d.y, d.x, d.score); };
    auto as = a, bs = b;
    std::sort(as.begin(), as.end(), [&](auto& l, auto& r) { return key(l) < key(r); });
    std::sort(bs.begin(), bs.end(), [&](auto& l, auto& r) { return key(l) < key(r); });
    for (std::size_t i = 0; i < as.size(); ++i) {
        if (key(as[i]) != key(bs[i])) return false;
    }
    return true;
}

} // namespace

TEST_SUITE_BEGIN("postprocess");

TEST_CASE("adaptive threshold keeps scores >= max/2") {
    const auto m = map_of({2.0f, 1.5f, 0.9f, 0.1f}, 2, 2);
    const auto dets = adaptive_threshold(m);
    REQUIRE(dets.size() == 2u);
    CHECK(dets[0].score == 2.0f);
    CHECK(dets[1].score == 1.5f);
}

TEST_CASE("adaptive threshold: zero map is empty, constant map keeps all") {
    CHECK(adaptive_threshold(map_of({0, 0, 0, 0}, 2, 2)).empty());
    CHECK(adaptive_threshold(map_of({0.4f, 0.4f, 0.4f, 0.4f}, 2, 2)).size() == 4u);
}

TEST_CASE("adaptive threshold equals the brute-force filter on random maps") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<float> u(0.0f, 3.0f);
    for (int trial = 0; trial < 300; ++trial) {
        ResponseMap m;
        m.height = 1 + static_cast<int>(rng() % 12);
        m.width = 1 + static_cast<int>(rng() % 12);
        m.scores.resize(static_cast<std::size_t>(m.height) * m.width);
        for (auto& v : m.scores) v = (rng() % 4 == 0) ? 0.0f : u(rng);
        CHECK(same_detections(adaptive_threshold(m), oracle::brute_force_threshold(m)));
    }
}

TEST_CASE("nms: same-pixel duplicate is suppressed") {
    const auto kept = nms({{10, 10, 1.0f}, {10, 10, 0.9f}});
    REQUIRE(kept.size() == 1u);
    CHECK(kept[0].score == 1.0f);
}

TEST_CASE("nms: boxes four pixels apart both survive") {
    const auto kept = nms({{10, 10, 1.0f}, {14, 10, 0.9f}});
    CHECK(kept.size() == 2u);
    CHECK(detection_box_iou({10, 10, 0}, {14, 10, 0}) == 0.0);
}

TEST_CASE("nms: one-pixel offset has IoU 0.6 and is suppressed") {
    CHECK(detection_box_iou({10, 10, 0}, {11, 10, 0}) == doctest::Approx(0.6).epsilon(1e-12));
    const auto kept = nms({{10, 10, 1.0f}, {11, 10, 0.8f}});
    REQUIRE(kept.size() == 1u);
    CHECK(kept[0].x == 10);
}

TEST_CASE("nms matches the O(n^2) reference on random instances") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = static_cast<int>(rng() % 200);
        std::vector<Detection> dets(n);
        for (auto& d : dets) {
            d.x = static_cast<int>(rng() % 40);
            d.y = static_cast<int>(rng() % 40);
            d.score = u(rng);
        }
        const auto got = nms(dets);
        const auto want = oracle::reference_nms(dets);
        CHECK(same_detections(got, want));

        // survivors: pairwise IoU <= 0.5, and a subset of the input
        for (std::size_t i = 0; i < got.size(); ++i) {
            for (std::size_t j = i + 1; j < got.size(); ++j) {
                CHECK(detection_box_iou(got[i], got[j]) <= 0.5);
            }
        }
        for (const auto& d : got) {
            CHECK(std::any_of(dets.begin(), dets.end(), [&](const Detection& s) {
                return s.x == d.x && s.y == d.y && s.score == d.score;
            }));
        }
    }
}

TEST_CASE("kmeans: k=1 centroid is the mean") {
    const std::vector<Point2> pts{{0, 0}, {2, 0}, {4, 6}};
    const auto clusters = kmeans_pp(pts, 1, 42);
    REQUIRE(clusters.size() == 1u);
    CHECK(clusters[0].size() == 3);
    CHECK(clusters[0].centroid.x == doctest::Approx(2.0));
    CHECK(clusters[0].centroid.y == doctest::Approx(2.0));
}

TEST_CASE("kmeans: as many clusters as distinct points costs zero") {
    const std::vector<Point2> pts{{0, 0}, {10, 0}, {0, 10}, {10, 10}};
    const auto clusters = kmeans_pp(pts, 4, 7);
    REQUIRE(clusters.size() == 4u);
    for (const auto& c : clusters) CHECK(c.size() == 1);
    CHECK(oracle::kmeans_cost(pts, clusters) == 0.0);
}

TEST_CASE("kmeans rejects empty input and reduces oversized k") {
    CHECK_THROWS_AS(kmeans_pp({}, 3, 0), std::invalid_argument);
    const std::vector<Point2> pts{{0, 0}, {5, 5}};
    CHECK(kmeans_pp(pts, 10, 0).size() == 2u);
}

TEST_CASE("kmeans reaches the exhaustively optimal cost on tight groups") {
    // three tight groups, exhaustive brute force feasible at 12 points
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    std::vector<Point2> pts;
    const Point2 centers[3] = {{0, 0}, {100, 0}, {0, 100}};
    for (const auto& c : centers) {
        for (int i = 0; i < 4; ++i) pts.push_back({c.x + jitter(rng), c.y + jitter(rng)});
    }
    const double optimal = oracle::brute_force_optimal_kmeans_cost(pts, 3);
    const auto clusters = kmeans_pp(pts, 3, 11);
    CHECK(oracle::kmeans_cost(pts, clusters) == doctest::Approx(optimal).epsilon(1e-9));
}

TEST_CASE("kmeans at 3x20 scale matches the per-group variance optimum") {
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    std::vector<Point2> pts;
    const Point2 centers[3] = {{0, 0}, {500, 0}, {0, 500}};
    double optimal = 0;
    for (const auto& c : centers) {
        std::vector<Point2> group;
        for (int i = 0; i < 20; ++i) group.push_back({c.x + jitter(rng), c.y + jitter(rng)});
        double mx = 0, my = 0;
        for (const auto& p : group) {
            mx += p.x / group.size();
            my += p.y / group.size();
        }
        for (const auto& p : group) {
            optimal += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
        }
        pts.insert(pts.end(), group.begin(), group.end());
    }
    const auto clusters = kmeans_pp(pts, 3, 13);
    CHECK(oracle::kmeans_cost(pts, clusters) == doctest::Approx(optimal).epsilon(1e-9));
}

TEST_CASE("kmeans: Lloyd objective never increases") {
    std::mt19937_64 rng(113);
    std::uniform_real_distribution<double> u(0.0, 200.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Point2> pts(40 + rng() % 60);
        for (auto& p : pts) p = {u(rng), u(rng)};
        std::vector<double> trace;
        kmeans_pp(pts, 6, trial, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-9);
    }
}

TEST_CASE("kmeans: converged assignment is nearest-centroid with low-index ties") {
    std::mt19937_64 rng(127);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    std::vector<Point2> pts(80);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const auto clusters = kmeans_pp(pts, 5, 3);
    std::vector<int> assign(pts.size(), -1);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (int idx : clusters[c].member_indices) assign[idx] = static_cast<int>(c);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        REQUIRE(assign[i] >= 0);
        const auto& own = clusters[assign[i]].centroid;
        const double down = (pts[i].x - own.x) * (pts[i].x - own.x) +
                            (pts[i].y - own.y) * (pts[i].y - own.y);
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            const auto& cc = clusters[c].centroid;
            const double d = (pts[i].x - cc.x) * (pts[i].x - cc.x) +
                             (pts[i].y - cc.y) * (pts[i].y - cc.y);
            CHECK(down <= d + 1e-12);
            if (d == down) CHECK(static_cast<int>(c) >= assign[i]);
        }
    }
}

namespace {

std::vector<Detection> grid_detections(int rows, int cols, int spacing, int x0, int y0) {
    std::vector<Detection> dets;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            dets.push_back({x0 + c * spacing, y0 + r * spacing, 1.0f});
        }
    }
    return dets;
}

} // namespace

TEST_CASE("cluster_filter removes isolated outliers, keeps the 7x7 grid") {
    auto dets = grid_detections(7, 7, 20, 100, 100);
    dets.push_back({500, 40, 1.0f});
    dets.push_back({30, 470, 1.0f});
    const auto kept = cluster_filter(dets, 10, 21);
    CHECK(kept.size() == 49u);
    for (const auto& d : kept) {
        CHECK(d.x >= 100);
        CHECK(d.x <= 100 + 6 * 20);
        CHECK(d.y >= 100);
        CHECK(d.y <= 100 + 6 * 20);
    }
}

TEST_CASE("cluster_filter keeps a clean 7x7 grid intact") {
    const auto dets = grid_detections(7, 7, 20, 50, 50);
    const auto kept = cluster_filter(dets, 10, 5);
    CHECK(kept.size() == 49u);
}

TEST_CASE("cluster_filter degenerate inputs") {
    CHECK(cluster_filter({}, 10, 0).empty());
    const std::vector<Detection> two{{1, 1, 0.5f}, {90, 90, 0.6f}};
    const auto kept = cluster_filter(two, 10, 0);
    CHECK(kept.size() == 2u);   // too few points to cluster meaningfully
}

TEST_CASE("cluster_filter output is a subset of its input") {
    std::mt19937_64 rng(131);
    std::vector<Detection> dets(60);
    for (auto& d : dets) {
        d.x = static_cast<int>(rng() % 200);
        d.y = static_cast<int>(rng() % 200);
        d.score = 1.0f;
    }
    const auto kept = cluster_filter(dets, 10, 99);
    for (const auto& k : kept) {
        CHECK(std::any_of(dets.begin(), dets.end(), [&](const Detection& d) {
            return d.x == k.x && d.y == k.y;
        }));
    }
}

TEST_CASE("detect pipeline is deterministic and honors ablation flags") {
    std::mt19937_64 rng(137);
    const auto params = init_params<float>(303);
    const Tensor img = oracle::random_tensor<float>(24, 24, 1, rng, 0.0f, 1.0f);

    DetectOptions opts;
    opts.seed = 5;
    const auto a = detect(img, params, opts);
    const auto b = detect(img, params, opts);
    CHECK(same_detections(a, b));

    DetectOptions no_nms = opts;
    no_nms.use_nms = false;
    no_nms.use_cluster = false;
    DetectOptions with_nms = opts;
    with_nms.use_cluster = false;
    CHECK(detect(img, params, with_nms).size() <= detect(img, params, no_nms).size());
}

TEST_CASE("detection list round-trips through its text format") {
    const std::vector<Detection> dets{{3, 4, 1.25f}, {10, 2, 0.5f}};
    const auto path = std::filesystem::temp_directory_path() / "ccdn_test_dets.txt";
    save_detections(dets, path);
    const auto loaded = load_detections(path);
    REQUIRE(loaded.size() == 2u);
    CHECK(loaded[0].x == 3);
    CHECK(loaded[0].y == 4);
    CHECK(loaded[0].score == doctest::Approx(1.25f));
    std::filesystem::remove(path);
}

TEST_SUITE_END();
