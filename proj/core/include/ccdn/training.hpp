#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccdn/model.hpp"
#include "ccdn/tensor.hpp"

namespace ccdn {

/// Binary per-pixel ground truth: 1 at corner pixels, 0 elsewhere.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;
    int n_positive = 0;
    int n_negative = 0;

    std::uint8_t at(int y, int x) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
};

enum class LossKind { CrossEntropy, Mse };

struct EpochRecord;
/// Invoked after every epoch when set on TrainConfig; purely observational.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainConfig {
    double initial_lr = 0.01;
    double decay_rate = 0.95;       // staircase factor per tau iterations
    int batch_size = 20;
    double momentum = 0.9;
    double reg_lambda = 0.01;
    int epochs = 100;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::CrossEntropy;
    int threads = 1;                // per-sample parallelism within a batch
    EpochCallback on_epoch;
};

struct OptimizerState {
    std::vector<float> velocity;    // one entry per parameter, flattening order
    long iteration = 0;
};

/// Eq.-style output clipping: positives into [1e-6, 1], negatives into
/// [0, 1 - 1e-6].
template <typename T>
std::vector<T> clip_activation(const BasicResponseMap<T>& raw, const LabelMap& labels);

template <typename T>
struct LossResult {
    double loss = 0;
    std::vector<T> grad;            // d loss / d raw, one entry per pixel
};

/// Class-balanced clipped cross entropy plus L2 regularization over all
/// parameters. The gradient map is zero wherever a clip bound is active;
/// the regularization gradient (lambda * p) is applied by the caller at
/// parameter-update time.
template <typename T>
LossResult<T> cross_entropy_loss(const BasicResponseMap<T>& raw, const LabelMap& labels,
                                 const BasicCcdnParams<T>& params, double lambda);

/// Plain mean squared error over all pixels; no balancing, no regularizer.
template <typename T>
LossResult<T> mse_loss(const BasicResponseMap<T>& raw, const LabelMap& labels);

/// Staircase schedule v0 * sigma^floor(i / tau). Plateau values are built by
/// repeated multiplication so consecutive plateaus differ by exactly sigma.
double learning_rate(long iteration, double v0, double sigma, long tau);

void sgd_momentum_step(CcdnParams& params, const CcdnParams& grads, OptimizerState& state,
                       double lr, double momentum);

struct TrainSample {
    Tensor image;
    LabelMap labels;
};

struct TrainingData {
    std::vector<TrainSample> train;
    std::vector<TrainSample> validation;
};

struct EpochRecord {
    int epoch = 0;              // 1-based
    double mean_loss = 0;       // mean over this epoch's batch losses
    double validation_msv = 0;
    double lr = 0;              // rate used for the epoch's last step
};

struct TrainResult {
    CcdnParams params;
    std::vector<EpochRecord> log;
};

/// Mean squared value of (response - label) over all pixels; the validation
/// metric. Numerically identical to mse_loss's value.
template <typename T>
double msv(const BasicResponseMap<T>& raw, const LabelMap& labels);

/// Seeded SGD training loop: per-epoch shuffle, batches of config.batch_size
/// (a smaller trailing batch is processed too), per-batch gradient = mean of
/// per-sample gradients, one optimizer step per batch.
TrainResult train(const TrainingData& data, const TrainConfig& config);

void save_training_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path);

/// Compares the analytic parameter gradient of cross_entropy_loss(forward(.))
/// against central finite differences (step 1e-4) at 64-bit precision, over a
/// random subset of parameters spanning all six layers. Returns the maximum
/// relative error.
double gradient_check(const CcdnParams& params, const Tensor& image, const LabelMap& labels,
                      double lambda, int n_checked = 200, std::uint64_t seed = 0);

/// Label-map helper shared by trainer and dataset loaders.
LabelMap label_map_from_binary(int height, int width, std::vector<std::uint8_t> labels);

} // namespace ccdn
