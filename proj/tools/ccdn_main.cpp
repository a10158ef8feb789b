// ccdn command-line tool: dataset generation, training, detection and
// evaluation as one binary with subcommands.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ccdn/datagen.hpp"
#include "ccdn/evaluation.hpp"
#include "ccdn/image_io.hpp"
#include "ccdn/model.hpp"
#include "ccdn/postprocess.hpp"
#include "ccdn/training.hpp"

namespace fs = std::filesystem;
using namespace ccdn;

namespace {

std::pair<double, double> parse_range(const std::string& text, const std::string& flag) {
    double lo = 0, hi = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf", &lo, &hi) != 2 || lo > hi) {
        throw CLI::ValidationError(flag, "expected LO:HI with LO <= HI, got '" + text + "'");
    }
    return {lo, hi};
}

std::pair<int, int> parse_size(const std::string& text, const std::string& flag) {
    int w = 0, h = 0;
    if (std::sscanf(text.c_str(), "%dx%d", &w, &h) != 2 || w < 16 || h < 16) {
        throw CLI::ValidationError(flag, "expected WxH (at least 16x16), got '" + text + "'");
    }
    return {w, h};
}

int run_generate(const std::string& out, int count, const std::string& boards,
                 const std::string& size, std::uint64_t seed, double train_fraction,
                 double invert_prob, const std::string& rotations, const std::string& k1,
                 const std::string& k2, const std::string& p1, const std::string& p2,
                 const std::string& noise, double perspective) {
    GenerateConfig cfg;
    cfg.boards = parse_board_list(boards);
    cfg.count = count;
    std::tie(cfg.canvas_w, cfg.canvas_h) = parse_size(size, "--size");
    cfg.seed = seed;
    cfg.train_fraction = train_fraction;
    cfg.max_perspective = perspective;
    cfg.augment.resize_to.reset();   // rendered directly at the target size
    cfg.augment.invert_probability = invert_prob;
    std::tie(cfg.augment.k1_min, cfg.augment.k1_max) = parse_range(k1, "--k1-range");
    std::tie(cfg.augment.k2_min, cfg.augment.k2_max) = parse_range(k2, "--k2-range");
    std::tie(cfg.augment.p1_min, cfg.augment.p1_max) = parse_range(p1, "--p1-range");
    std::tie(cfg.augment.p2_min, cfg.augment.p2_max) = parse_range(p2, "--p2-range");
    std::tie(cfg.augment.noise_sigma_min, cfg.augment.noise_sigma_max) =
        parse_range(noise, "--noise-range");

    std::printf("config: generate out=%s count=%d boards=%s size=%s seed=%llu"
                " train-fraction=%.6f invert-prob=%.3f rotations=%s k1=%s k2=%s p1=%s p2=%s"
                " noise=%s perspective=%.3f\n",
                out.c_str(), count, boards.c_str(), size.c_str(),
                static_cast<unsigned long long>(seed), train_fraction, invert_prob,
                rotations.c_str(), k1.c_str(), k2.c_str(), p1.c_str(), p2.c_str(),
                noise.c_str(), perspective);

    cfg.augment.rotation_choices.clear();
    for (std::size_t start = 0; start < rotations.size();) {
        std::size_t comma = rotations.find(',', start);
        if (comma == std::string::npos) comma = rotations.size();
        const int angle = std::atoi(rotations.substr(start, comma - start).c_str());
        if (angle != 0 && angle != 90 && angle != 180 && angle != 270) {
            throw CLI::ValidationError("--rotations", "angles must be 0, 90, 180 or 270");
        }
        cfg.augment.rotation_choices.push_back(angle);
        start = comma + 1;
    }

    const Manifest manifest = generate_dataset(cfg, out);
    int train = 0, val = 0;
    for (const auto& e : manifest.entries) (e.split == "train" ? train : val) += 1;
    std::printf("wrote %d samples (%d train, %d val)\n", count, train, val);
    std::printf("manifest: %s\n", (fs::path(out) / "manifest.tsv").string().c_str());
    return 0;
}

int run_train(const std::string& manifest_path, const std::string& out,
              const std::string& log_path, const std::string& loss, int epochs, int batch,
              double lr, double decay, double momentum, double lambda, std::uint64_t seed,
              int threads) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.initial_lr = lr;
    cfg.decay_rate = decay;
    cfg.momentum = momentum;
    cfg.reg_lambda = lambda;
    cfg.seed = seed;
    cfg.threads = threads;
    if (loss == "ce") {
        cfg.loss = LossKind::CrossEntropy;
    } else if (loss == "mse") {
        cfg.loss = LossKind::Mse;
    } else {
        throw CLI::ValidationError("--loss", "must be 'ce' or 'mse'");
    }

    std::printf("config: train manifest=%s out=%s loss=%s epochs=%d batch=%d lr=%g decay=%g"
                " momentum=%g lambda=%g seed=%llu threads=%d\n",
                manifest_path.c_str(), out.c_str(), loss.c_str(), epochs, batch, lr, decay,
                momentum, lambda, static_cast<unsigned long long>(seed), threads);
    const Manifest manifest = load_manifest(manifest_path);
    const TrainingData data = load_training_data(manifest);
    std::printf("training on %zu samples, validating on %zu (loss=%s, epochs=%d)\n",
                data.train.size(), data.validation.size(), loss.c_str(), epochs);

    cfg.on_epoch = [](const EpochRecord& r) {
        std::printf("epoch %d: loss=%.6f msv=%.6f lr=%.6g\n", r.epoch, r.mean_loss,
                    r.validation_msv, r.lr);
    };
    const TrainResult result = train(data, cfg);
    save_weights(result.params, out);
    const std::string log_file = log_path.empty() ? out + ".log.csv" : log_path;
    save_training_log(result.log, log_file);
    std::printf("weights: %s\nlog: %s\n", out.c_str(), log_file.c_str());
    return 0;
}

void draw_overlay(Tensor image, const std::vector<Detection>& dets, const fs::path& path) {
    for (const auto& d : dets) {
        for (int t = -3; t <= 3; ++t) {
            const int x = d.x + t, y = d.y + t;
            if (x >= 0 && x < image.width) {
                image.at(0, d.y, x) = 1.0f;
                if (d.y + 1 < image.height) image.at(0, d.y + 1, x) = 0.0f;
            }
            if (y >= 0 && y < image.height) {
                image.at(0, y, d.x) = 1.0f;
                if (d.x + 1 < image.width) image.at(0, y, d.x + 1) = 0.0f;
            }
        }
    }
    write_pgm(image, path);
}

int run_detect(const std::string& weights_path, const std::vector<std::string>& images,
               const std::string& out_dir, bool overlay, bool no_threshold, bool no_nms,
               bool no_cluster, int cluster_k, std::uint64_t seed) {
    std::printf("config: detect weights=%s out-dir=%s overlay=%d threshold=%d nms=%d"
                " cluster=%d cluster-k=%d seed=%llu images=%zu\n",
                weights_path.c_str(), out_dir.c_str(), overlay ? 1 : 0, no_threshold ? 0 : 1,
                no_nms ? 0 : 1, no_cluster ? 0 : 1, cluster_k,
                static_cast<unsigned long long>(seed), images.size());
    const CcdnParams params = load_weights(weights_path);
    DetectOptions opts;
    opts.use_threshold = !no_threshold;
    opts.use_nms = !no_nms;
    opts.use_cluster = !no_cluster;
    opts.cluster_k = cluster_k;
    opts.seed = seed;

    fs::create_directories(out_dir);
    int failures = 0;
    for (const auto& image_path : images) {
        try {
            const Tensor img = read_pgm(image_path);
            const auto dets = detect(img, params, opts);
            const std::string stem = fs::path(image_path).stem().string();
            const fs::path det_path = fs::path(out_dir) / (stem + ".detections.txt");
            save_detections(dets, det_path);
            std::printf("%s: %zu detections -> %s\n", image_path.c_str(), dets.size(),
                        det_path.string().c_str());
            if (overlay) {
                draw_overlay(img, dets, fs::path(out_dir) / (stem + ".overlay.pgm"));
            }
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s: %s\n", image_path.c_str(), e.what());
            ++failures;
        }
    }
    return failures ? 1 : 0;
}

int run_eval(const std::string& manifest_path, const std::string& split,
             const std::string& weights_path, const std::string& detections_dir,
             const std::string& report_path, const std::string& breakdown_path,
             bool no_threshold, bool no_nms, bool no_cluster, int cluster_k,
             std::uint64_t seed) {
    if (weights_path.empty() == detections_dir.empty()) {
        throw CLI::ValidationError("--weights/--detections",
                                   "exactly one detection source is required");
    }
    std::printf("config: eval manifest=%s split=%s weights=%s detections=%s threshold=%d"
                " nms=%d cluster=%d cluster-k=%d seed=%llu\n",
                manifest_path.c_str(), split.c_str(), weights_path.c_str(),
                detections_dir.c_str(), no_threshold ? 0 : 1, no_nms ? 0 : 1,
                no_cluster ? 0 : 1, cluster_k, static_cast<unsigned long long>(seed));
    const Manifest manifest = load_manifest(manifest_path);

    std::optional<CcdnParams> params;
    if (!weights_path.empty()) params = load_weights(weights_path);
    DetectOptions opts;
    opts.use_threshold = !no_threshold;
    opts.use_nms = !no_nms;
    opts.use_cluster = !no_cluster;
    opts.cluster_k = cluster_k;
    opts.seed = seed;

    std::vector<MatchResult> results;
    std::vector<PerImageRow> rows;
    for (const auto& e : manifest.entries) {
        if (split != "all" && e.split != split) continue;
        const fs::path image_path = manifest.base_dir / e.image_path;
        const auto corners = load_corners(manifest.base_dir / e.corner_path);
        std::vector<Detection> dets;
        if (params) {
            const Tensor img = read_pgm(image_path);
            dets = detect(img, *params, opts);
        } else {
            const std::string stem = image_path.stem().string();
            dets = load_detections(fs::path(detections_dir) / (stem + ".detections.txt"));
        }
        const MatchResult m = match(dets, corners);
        rows.push_back(summarize_image(e.image_path, m));
        results.push_back(std::move(m));
    }
    if (results.empty()) {
        throw std::runtime_error("no manifest entries matched split '" + split + "'");
    }

    const MetricsReport rep = compute_metrics(results);
    std::printf("images=%ld gt=%ld detections=%ld\n", rep.n_images, rep.n_gt_corners,
                rep.n_detections);
    std::printf("Accuracy,Missed,Double,FalsePositives\n%.4f,%.4f,%.4f,%ld\n", rep.accuracy_px,
                rep.missed_pct, rep.double_pct, rep.false_positives);
    if (!report_path.empty()) save_metrics_report(rep, report_path);
    if (!breakdown_path.empty()) save_per_image_breakdown(rows, breakdown_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    CLI::App app{"checkerboard corner detection: synthetic data, training, "
                 "detection and evaluation"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "render a synthetic labeled dataset");
    std::string gen_out, gen_boards = "7x7,6x9,7x11,9x9,12x13", gen_size = "640x480";
    std::string gen_rotations = "0,90,180,270";
    std::string gen_k1 = "-0.4:0.4", gen_k2 = "-0.1:0.1", gen_p1 = "-0.01:0.01",
                gen_p2 = "-0.01:0.01", gen_noise = "0:0.04";
    int gen_count = 100;
    std::uint64_t gen_seed = 0;
    double gen_train_fraction = 8000.0 / 8900.0, gen_invert = 0.5, gen_persp = 0.35;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--count", gen_count, "number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--boards", gen_boards, "board presets, e.g. 7x7,6x9");
    gen->add_option("--size", gen_size, "canvas size WxH");
    gen->add_option("--seed", gen_seed, "master random seed");
    gen->add_option("--train-fraction", gen_train_fraction, "train split fraction");
    gen->add_option("--invert-prob", gen_invert, "intensity inversion probability");
    gen->add_option("--rotations", gen_rotations, "allowed rotations (subset of 0,90,180,270)");
    gen->add_option("--k1-range", gen_k1, "radial k1 range LO:HI");
    gen->add_option("--k2-range", gen_k2, "radial k2 range LO:HI");
    gen->add_option("--p1-range", gen_p1, "tangential p1 range LO:HI");
    gen->add_option("--p2-range", gen_p2, "tangential p2 range LO:HI");
    gen->add_option("--noise-range", gen_noise, "noise sigma range LO:HI (gray levels)");
    gen->add_option("--perspective", gen_persp, "projective tilt strength (0 = affine)");

    // train
    auto* tr = app.add_subcommand("train", "train the detection net on a manifest");
    std::string tr_manifest, tr_out = "weights.ccdn", tr_log, tr_loss = "ce";
    int tr_epochs = 100, tr_batch = 20, tr_threads = 1;
    double tr_lr = 0.01, tr_decay = 0.95, tr_momentum = 0.9, tr_lambda = 0.01;
    std::uint64_t tr_seed = 0;
    tr->add_option("--manifest", tr_manifest, "dataset manifest")->required();
    tr->add_option("--out", tr_out, "weights file to write");
    tr->add_option("--log", tr_log, "training log path (default: <out>.log.csv)");
    tr->add_option("--loss", tr_loss, "loss function: ce or mse");
    tr->add_option("--epochs", tr_epochs, "training epochs")->check(CLI::NonNegativeNumber);
    tr->add_option("--batch", tr_batch, "batch size")->check(CLI::PositiveNumber);
    tr->add_option("--lr", tr_lr, "initial learning rate");
    tr->add_option("--decay", tr_decay, "staircase decay factor per tau iterations");
    tr->add_option("--momentum", tr_momentum, "SGD momentum");
    tr->add_option("--lambda", tr_lambda, "L2 regularization weight");
    tr->add_option("--seed", tr_seed, "random seed");
    tr->add_option("--threads", tr_threads, "worker threads per batch");

    // detect
    auto* det = app.add_subcommand("detect", "detect corners in PGM images");
    std::string det_weights, det_out = ".";
    std::vector<std::string> det_images;
    bool det_overlay = false, det_no_threshold = false, det_no_nms = false,
         det_no_cluster = false;
    int det_k = 10;
    std::uint64_t det_seed = 0;
    det->add_option("--weights", det_weights, "weights file")->required();
    det->add_option("images", det_images, "input images (binary PGM)")->required();
    det->add_option("--out-dir", det_out, "directory for detection files");
    det->add_flag("--overlay", det_overlay, "also write overlay images");
    det->add_flag("--no-threshold", det_no_threshold, "disable the max/2 threshold stage");
    det->add_flag("--no-nms", det_no_nms, "disable non-maximum suppression");
    det->add_flag("--no-cluster", det_no_cluster, "disable cluster-based filtering");
    det->add_option("--cluster-k", det_k, "k for the clustering stage");
    det->add_option("--seed", det_seed, "random seed (clustering)");

    // eval
    auto* ev = app.add_subcommand("eval", "score detections against ground truth");
    std::string ev_manifest, ev_split = "val", ev_weights, ev_dets, ev_report, ev_breakdown;
    bool ev_no_threshold = false, ev_no_nms = false, ev_no_cluster = false;
    int ev_k = 10;
    std::uint64_t ev_seed = 0;
    ev->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    ev->add_option("--split", ev_split, "manifest split: train, val or all");
    ev->add_option("--weights", ev_weights, "run detection with these weights");
    ev->add_option("--detections", ev_dets, "directory of precomputed detection files");
    ev->add_option("--report", ev_report, "metrics report output path");
    ev->add_option("--breakdown", ev_breakdown, "per-image breakdown CSV path");
    ev->add_flag("--no-threshold", ev_no_threshold, "disable the max/2 threshold stage");
    ev->add_flag("--no-nms", ev_no_nms, "disable non-maximum suppression");
    ev->add_flag("--no-cluster", ev_no_cluster, "disable cluster-based filtering");
    ev->add_option("--cluster-k", ev_k, "k for the clustering stage");
    ev->add_option("--seed", ev_seed, "random seed (clustering)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return run_generate(gen_out, gen_count, gen_boards, gen_size, gen_seed,
                                gen_train_fraction, gen_invert, gen_rotations, gen_k1, gen_k2,
                                gen_p1, gen_p2, gen_noise, gen_persp);
        }
        if (tr->parsed()) {
            return run_train(tr_manifest, tr_out, tr_log, tr_loss, tr_epochs, tr_batch, tr_lr,
                             tr_decay, tr_momentum, tr_lambda, tr_seed, tr_threads);
        }
        if (det->parsed()) {
            return run_detect(det_weights, det_images, det_out, det_overlay, det_no_threshold,
                              det_no_nms, det_no_cluster, det_k, det_seed);
        }
        if (ev->parsed()) {
            return run_eval(ev_manifest, ev_split, ev_weights, ev_dets, ev_report, ev_breakdown,
                            ev_no_threshold, ev_no_nms, ev_no_cluster, ev_k, ev_seed);
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
