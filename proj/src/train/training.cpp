#include "nsnp/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "nsnp/error.h"
#include "nsnp/ops.h"

namespace nsnp::training {

std::pair<std::size_t, std::size_t> LrSchedule::position(std::size_t epoch) const {
    std::size_t period = first_period;
    while (epoch >= period) {
        epoch -= period;
        period *= period_mult;
    }
    return {epoch, period};
}

double LrSchedule::lr_for_epoch(std::size_t epoch) const {
    const auto [t_cur, t_i] = position(epoch);
    return lr_at(*this, static_cast<double>(t_cur), static_cast<double>(t_i));
}

double lr_at(const LrSchedule& s, double t_cur, double t_i) {
    return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(t_cur / t_i * std::numbers::pi));
}

std::vector<std::string> TrainConfig::problems() const {
    std::vector<std::string> out;
    if (batch_size == 0) out.push_back("batch_size must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) out.push_back("momentum must be in [0, 1)");
    if (!(schedule.lr_min > 0.0)) out.push_back("lr_min must be > 0");
    if (!(schedule.lr_max >= schedule.lr_min)) out.push_back("lr_max must be >= lr_min");
    if (schedule.first_period == 0) out.push_back("restart_period must be >= 1");
    if (schedule.period_mult == 0) out.push_back("restart_mult must be >= 1");
    return out;
}

void sgd_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, double lr, double momentum,
              MomentumState& state) {
    if (grads.size() != params.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.velocity.empty()) {
        for (const auto& p : params) state.velocity.emplace_back(p.numel(), 0.0);
    }
    if (state.velocity.size() != params.size()) throw ShapeError("sgd_step: momentum state has the wrong length");
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto pv = params[k].mutable_values();
        auto& v = state.velocity[k];
        if (grads[k].size() != pv.size() || v.size() != pv.size()) {
            throw ShapeError("sgd_step: gradient " + std::to_string(k) + " has " + std::to_string(grads[k].size()) +
                             " entries, parameter " + shape_str(params[k].shape()) + " has " +
                             std::to_string(pv.size()));
        }
        for (std::size_t i = 0; i < pv.size(); ++i) {
            v[i] = momentum * v[i] + grads[k][i];
            pv[i] -= lr * v[i];
        }
    }
}

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport compute_metrics(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels,
                              std::size_t num_classes) {
    if (predictions.size() != labels.size()) {
        throw ValidationError("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                              std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw ValidationError("compute_metrics: no samples");
    if (num_classes < 2) throw ValidationError("compute_metrics: need at least 2 classes");

    MetricsReport r;
    r.num_classes = num_classes;
    r.samples = labels.size();
    // confusion[label][prediction]
    std::vector<std::size_t> confusion(num_classes * num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes || predictions[i] >= num_classes) {
            throw ValidationError("compute_metrics: class index out of range at sample " + std::to_string(i));
        }
        ++confusion[labels[i] * num_classes + predictions[i]];
        correct += labels[i] == predictions[i];
    }
    r.accuracy = ratio(correct, r.samples);
    for (std::size_t c = 0; c < num_classes; ++c) {
        ConfusionCounts cc;
        for (std::size_t l = 0; l < num_classes; ++l) {
            for (std::size_t p = 0; p < num_classes; ++p) {
                const std::size_t n = confusion[l * num_classes + p];
                if (l == c && p == c) cc.tp += n;
                else if (p == c) cc.fp += n;
                else if (l == c) cc.fn += n;
                else cc.tn += n;
            }
        }
        r.counts.push_back(cc);
        r.class_precision.push_back(ratio(cc.tp, cc.tp + cc.fp));
        r.class_recall.push_back(ratio(cc.tp, cc.tp + cc.fn));
    }
    if (num_classes == 2) {
        r.precision = r.class_precision[0];
        r.sensitivity = r.class_recall[0];
    } else {
        const double k = static_cast<double>(num_classes);
        r.precision = std::accumulate(r.class_precision.begin(), r.class_precision.end(), 0.0) / k;
        r.sensitivity = std::accumulate(r.class_recall.begin(), r.class_recall.end(), 0.0) / k;
    }
    return r;
}

std::string format_report(const MetricsReport& r, const std::vector<std::string>& names) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "samples    %zu\naccuracy   %.6f\nsen        %.6f\npre        %.6f\n", r.samples,
                  r.accuracy, r.sensitivity, r.precision);
    out << buf << "\nclass      precision  recall     tp    fp    fn    tn\n";
    for (std::size_t c = 0; c < r.num_classes; ++c) {
        const std::string name = c < names.size() ? names[c] : std::to_string(c);
        const auto& k = r.counts[c];
        std::snprintf(buf, sizeof buf, "%-10s %-10.6f %-10.6f %-5zu %-5zu %-5zu %zu\n", name.c_str(),
                      r.class_precision[c], r.class_recall[c], k.tp, k.fp, k.fn, k.tn);
        out << buf;
    }
    return out.str();
}

void write_log_csv(const std::vector<EpochLog>& rows, std::ostream& out) {
    out << "epoch,lr,train_loss,val_loss,val_acc,val_sen,val_pre\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss,
                      r.val_loss, r.val_acc, r.val_sen, r.val_pre);
        out << buf;
    }
}

namespace {

Tensor gather(const Split& split, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
              std::vector<std::size_t>& labels) {
    std::vector<const Tensor*> items;
    labels.clear();
    for (std::size_t i = begin; i < end; ++i) {
        items.push_back(&split.images[order[i]]);
        labels.push_back(split.labels[order[i]]);
    }
    return ops::stack_batch(items);
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
    const std::size_t k = logits.dim(1);
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
        if (logits[row * k + c] > logits[row * k + best]) best = c;
    }
    return best;
}

void require_finite(double loss, const std::string& where) {
    if (!std::isfinite(loss)) throw NumericalError("loss diverged (" + std::to_string(loss) + ") " + where);
}

}  // namespace

EvalResult evaluate(model::Model& model, const Split& split, std::size_t batch_size) {
    if (split.empty()) throw ValidationError("evaluate: split has no samples");
    if (batch_size == 0) throw ValidationError("evaluate: batch_size must be >= 1");
    NoGradGuard guard;
    EvalResult r;
    std::vector<std::size_t> order(split.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> labels;
    double total = 0.0;
    for (std::size_t b = 0; b < split.size(); b += batch_size) {
        const std::size_t e = std::min(split.size(), b + batch_size);
        Tensor logits = model.forward(gather(split, order, b, e, labels), ops::Mode::eval);
        if (logits.dim(1) != model.config().num_classes) throw ShapeError("evaluate: logits width mismatch");
        total += ops::softmax_cross_entropy(logits, labels).item() * static_cast<double>(e - b);
        for (std::size_t i = 0; i < e - b; ++i) r.predictions.push_back(argmax_row(logits, i));
    }
    r.loss = total / static_cast<double>(split.size());
    r.report = compute_metrics(r.predictions, split.labels, model.config().num_classes);
    return r;
}

TrainResult train(model::Model& model, const DataSplits& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    auto problems = config.problems();
    if (data.train.empty()) problems.push_back("train split is empty");
    if (data.val.empty()) problems.push_back("validation split is empty");
    for (const Split* s : {&data.train, &data.val, &data.test}) {
        if (s->images.size() != s->labels.size()) problems.push_back("split has mismatched image/label counts");
        for (std::size_t l : s->labels) {
            if (l >= model.config().num_classes) {
                problems.push_back("label " + std::to_string(l) + " out of range for " +
                                   std::to_string(model.config().num_classes) + " classes");
                break;
            }
        }
    }
    if (!problems.empty()) {
        std::string msg = "cannot train:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }

    TrainResult result;
    std::mt19937_64 rng(config.seed);
    std::vector<Tensor> params = model.parameters();
    MomentumState momentum;
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> labels;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.schedule.lr_for_epoch(epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t seen = 0;
        // A short tail batch gives train-mode BN statistics far from the full
        // batch ones and destabilised toy runs; it is skipped unless it is the
        // only batch. The reshuffle rotates which samples sit out.
        const std::size_t usable =
            order.size() < config.batch_size ? order.size() : order.size() - order.size() % config.batch_size;
        for (std::size_t b = 0; b < usable; b += config.batch_size) {
            const std::size_t e = std::min(usable, b + config.batch_size);
            Tensor batch = gather(data.train, order, b, e, labels);
            Tensor loss = ops::softmax_cross_entropy(model.forward(batch, ops::Mode::train), labels);
            require_finite(loss.item(), "at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                                            std::to_string(b));
            backward(loss);
            std::vector<std::vector<double>> grads;
            grads.reserve(params.size());
            for (auto& p : params) {
                grads.push_back(p.grad());
                p.zero_grad();
            }
            sgd_step(params, grads, lr, config.momentum, momentum);
            model.round_state_to_float();
            total += loss.item() * static_cast<double>(e - b);
            seen += e - b;
        }
        EpochLog row;
        row.epoch = epoch + 1;
        row.lr = lr;
        row.train_loss = total / static_cast<double>(seen);
        EvalResult val = evaluate(model, data.val, config.batch_size);
        require_finite(val.loss, "in validation after epoch " + std::to_string(epoch + 1));
        row.val_loss = val.loss;
        row.val_acc = val.report.accuracy;
        row.val_sen = val.report.sensitivity;
        row.val_pre = val.report.precision;
        result.log.push_back(row);
        if (on_epoch) on_epoch(row);
    }

    const bool use_test = !data.test.empty();
    result.final_split = use_test ? "test" : "val";
    result.final_report = evaluate(model, use_test ? data.test : data.val, config.batch_size).report;
    return result;
}

}  // namespace nsnp::training
