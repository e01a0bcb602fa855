#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nsnp/model.h"

namespace nsnp::training {

// Cosine annealing with warm restarts, advanced once per epoch. Period i lasts
// first_period * period_mult^i epochs.
struct LrSchedule {
    double lr_min = 0.0005;
    double lr_max = 0.1;
    std::size_t first_period = 50;
    std::size_t period_mult = 2;

    // (T_cur, T_i) of a zero-based epoch index.
    std::pair<std::size_t, std::size_t> position(std::size_t epoch) const;
    double lr_for_epoch(std::size_t epoch) const;
};

double lr_at(const LrSchedule& schedule, double t_cur, double t_i);

struct TrainConfig {
    std::size_t batch_size = 30;
    std::size_t epochs = 600;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    LrSchedule schedule;

    std::vector<std::string> problems() const;
};

// Velocity buffers, one per parameter, created lazily on the first step.
struct MomentumState {
    std::vector<std::vector<double>> velocity;
};

// v <- mu * v + g;  p <- p - lr * v.
void sgd_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, double lr, double momentum,
              MomentumState& state);

struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

// Precision and recall are one-vs-rest per class; a zero denominator gives 0.
// For two classes the summary figures are those of class 0 (benign) taken as
// the positive class. For more, they are macro averages over classes.
struct MetricsReport {
    std::size_t num_classes = 0;
    std::size_t samples = 0;
    double accuracy = 0.0;
    double sensitivity = 0.0;  // recall
    double precision = 0.0;
    std::vector<ConfusionCounts> counts;
    std::vector<double> class_precision;
    std::vector<double> class_recall;
};

MetricsReport compute_metrics(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels,
                              std::size_t num_classes);
// Human-readable block; class_names may be empty.
std::string format_report(const MetricsReport& report, const std::vector<std::string>& class_names);

// Images are [3,S,S] tensors.
struct Split {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
};

struct DataSplits {
    Split train, val, test;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double val_sen = 0.0;
    double val_pre = 0.0;
};

void write_log_csv(const std::vector<EpochLog>& rows, std::ostream& out);

struct EvalResult {
    double loss = 0.0;
    std::vector<std::size_t> predictions;
    MetricsReport report;
};

EvalResult evaluate(model::Model& model, const Split& split, std::size_t batch_size);

struct TrainResult {
    std::vector<EpochLog> log;
    // Test split when it has samples, otherwise validation.
    MetricsReport final_report;
    std::string final_split;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mini-batches hold exactly batch_size samples; the remainder after the last
// full batch sits out that epoch unless the split is smaller than one batch.
// Throws ValidationError for empty train/val splits or a bad config and
// NumericalError when the training loss stops being finite.
TrainResult train(model::Model& model, const DataSplits& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace nsnp::training
