// Runs the eight acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "nsnp/cli.h"
#include "nsnp/data.h"
#include "nsnp/gradcheck.h"
#include "nsnp/layers.h"
#include "nsnp/model.h"
#include "nsnp/nn_gradcheck.h"
#include "nsnp/training.h"

using namespace nsnp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

// AC1 -----------------------------------------------------------------------

Verdict gradient_suite() {
    Verdict v;
    const auto t0 = Clock::now();
    const auto model_names = [] {
        std::set<std::string> s;
        for (const auto& c : gradcheck::model_cases()) s.insert(c.name);
        return s;
    }();
    const auto results = gradcheck::run(gradcheck::all_cases(), 0);
    double op_max = 0, model_max = 0;
    std::size_t failed = 0;
    for (const auto& r : results) {
        const bool is_model = model_names.count(r.name) != 0;
        const double limit = is_model ? 1e-3 : 1e-4;
        (is_model ? model_max : op_max) = std::max(is_model ? model_max : op_max, r.max_rel_error);
        if (!r.passed || !(r.max_rel_error < limit) || r.tolerance > limit) {
            ++failed;
            v.require(false, r.name + " err " + fmt("%.2e", r.max_rel_error));
        }
    }
    const double secs = seconds_since(t0);
    v.require(!model_names.empty(), "no model cases");
    v.require(secs < 60, "runtime " + fmt("%.1f s", secs));
    v.detail = std::to_string(results.size() - failed) + "/" + std::to_string(results.size()) +
               " cases, op max " + fmt("%.2e", op_max) + ", model max " + fmt("%.2e", model_max) + ", " +
               fmt("%.1f s", secs) + (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

// AC2 -----------------------------------------------------------------------

using Rows = std::vector<std::vector<double>>;

// Parses the simulate CSV into numeric rows (t, u..., fired...).
Rows parse_trace(const std::string& csv) {
    Rows rows;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

Verdict nsnp_oracle() {
    Verdict v;
    // Hand traces, T = 1. Each row: t, u_1..u_m, fired_1..fired_m.
    //
    // one neuron, autapse 0.5, g = f = id, u0 = 4: a firing neuron keeps 0.5 u.
    // Once u < 1 nothing fires.
    //
    // two neurons, w11 = 0.5, w21 = 1, g = f = id, u0 = (2, 0.5):
    //   (2,.5) n1 fires -> (0 + 1, .5 + 2) = (1, 2.5)
    //   (1,2.5) both    -> (0 + .5, 0 + 1) = (.5, 1)
    //   (.5,1) n2 only (no outgoing weight) -> (.5, 0)
    //
    // three-neuron chain, autapses 0.5, w21 = w32 = 1, g(u) = u/2, f = id,
    // u0 = (2, 0, .5). A neuron fires iff u >= 1, keeps u/2, emits u:
    //   (2,0,.5)    -> (1+1, 0+2, .5)          = (2, 2, .5)
    //   (2,2,.5)    -> (2, 1+2+1, .5+2)        = (2, 4, 2.5)
    //   (2,4,2.5)   -> (2, 2+2+2, 1.25+4+1.25) = (2, 6, 6.5)
    //   (2,6,6.5)   -> (2, 3+2+3, 3.25+6+3.25) = (2, 8, 12.5)
    //   (2,8,12.5)  -> (2, 10, 20.5)
    const std::map<std::string, Rows> expected{
        {"one_neuron.json", {{0, 4, 1}, {1, 2, 1}, {2, 1, 1}, {3, 0.5, 0}, {4, 0.5, 0}, {5, 0.5, 0}}},
        {"two_neuron.json",
         {{0, 2, 0.5, 1, 0}, {1, 1, 2.5, 1, 1}, {2, 0.5, 1, 0, 1}, {3, 0.5, 0, 0, 0}, {4, 0.5, 0, 0, 0},
          {5, 0.5, 0, 0, 0}}},
        {"three_neuron.json",
         {{0, 2, 0, 0.5, 1, 0, 0},
          {1, 2, 2, 0.5, 1, 1, 0},
          {2, 2, 4, 2.5, 1, 1, 1},
          {3, 2, 6, 6.5, 1, 1, 1},
          {4, 2, 8, 12.5, 1, 1, 1},
          {5, 2, 10, 20.5, 1, 1, 1}}},
    };
    double worst = 0;
    for (const auto& [file, want] : expected) {
        std::ostringstream out, err;
        const int code = cli::run_cli({"simulate", "--scenario", (fs::path(NSNP_SCENARIO_DIR) / file).string()}, out, err);
        if (code != 0) {
            v.require(false, file + ": " + err.str());
            continue;
        }
        const Rows got = parse_trace(out.str());
        v.require(want.size() >= 6, file + " shorter than 5 steps");
        v.require(got.size() == want.size(), file + " has " + std::to_string(got.size()) + " rows");
        for (std::size_t r = 0; r < std::min(got.size(), want.size()); ++r) {
            v.require(got[r].size() == want[r].size(), file + " row width");
            for (std::size_t c = 0; c < std::min(got[r].size(), want[r].size()); ++c) {
                worst = std::max(worst, std::abs(got[r][c] - want[r][c]));
            }
        }
    }
    v.require(worst < 1e-12, "trace deviates by " + fmt("%.3e", worst));

    std::mt19937_64 rng(2024);
    double worst_sum = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Shape s = gradcheck::random_shape(rng, 3, 16, 1, 12);
        const Tensor a2 = layers::mean_deviation(gradcheck::random_tensor(rng, s, -10.0, 10.0));
        for (std::size_t n = 0; n < s[0]; ++n) {
            double total = 0;
            for (std::size_t c = 0; c < s[1]; ++c) total += a2[n * s[1] + c];
            worst_sum = std::max(worst_sum, std::abs(total));
        }
    }
    v.require(worst_sum < 1e-10, "sum of A2 reaches " + fmt("%.3e", worst_sum));
    v.detail = "3 scenarios, max trace |d| " + fmt("%.1e", worst) + ", max |sum A2| " + fmt("%.1e", worst_sum) +
               (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

// AC3 -----------------------------------------------------------------------

Verdict schedule() {
    Verdict v;
    training::LrSchedule s;
    v.require(s.lr_min == 0.0005 && s.lr_max == 0.1, "default bounds");
    double worst = 0;
    for (double ti : {50.0, 100.0, 200.0, 7.0}) {
        for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            const double t = frac * ti;
            const double closed = 0.0005 + 0.5 * (0.1 - 0.0005) * (1 + std::cos(std::numbers::pi * t / ti));
            worst = std::max(worst, std::abs(training::lr_at(s, t, ti) - closed));
        }
    }
    v.require(worst < 1e-12, "closed form deviates by " + fmt("%.3e", worst));
    // periods 50, 100, 200: restarts at epochs 50, 150, 350
    for (std::size_t e : {0u, 50u, 150u, 350u}) {
        v.require(std::abs(s.lr_for_epoch(e) - 0.1) < 1e-12, "no reset at epoch " + std::to_string(e));
    }
    v.require(s.lr_for_epoch(49) < s.lr_for_epoch(48), "not decaying inside a period");
    v.detail = "max |d| " + fmt("%.1e", worst) + ", resets at 50/150/350" + (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

// AC4 -----------------------------------------------------------------------

struct Oracle {
    double accuracy, sensitivity, precision;
};

Oracle brute_force(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& label, std::size_t k) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == label[i];
    std::vector<double> prec(k), rec(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            tp += pred[i] == c && label[i] == c;
            fp += pred[i] == c && label[i] != c;
            fn += pred[i] != c && label[i] == c;
        }
        prec[c] = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        rec[c] = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    }
    Oracle o{static_cast<double>(correct) / static_cast<double>(pred.size()), 0, 0};
    if (k == 2) {
        o.sensitivity = rec[0];
        o.precision = prec[0];
    } else {
        for (std::size_t c = 0; c < k; ++c) {
            o.sensitivity += rec[c];
            o.precision += prec[c];
        }
        o.sensitivity /= static_cast<double>(k);
        o.precision /= static_cast<double>(k);
    }
    return o;
}

Verdict metrics() {
    Verdict v;
    std::mt19937_64 rng(77);
    for (std::size_t k : {2u, 8u}) {
        std::uniform_int_distribution<std::size_t> d(0, k - 1);
        for (int round = 0; round < 5; ++round) {
            std::vector<std::size_t> p(1000), l(1000);
            for (auto& x : p) x = d(rng);
            for (auto& x : l) x = d(rng);
            const auto r = training::compute_metrics(p, l, k);
            const auto o = brute_force(p, l, k);
            v.require(r.accuracy == o.accuracy && r.sensitivity == o.sensitivity && r.precision == o.precision,
                      std::to_string(k) + "-class mismatch");
        }
    }
    // positive class 0: TP 3, FN 2, FP 1, TN 4
    std::vector<std::size_t> p{0, 0, 0, 1, 1, 0, 1, 1, 1, 1}, l{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const auto r = training::compute_metrics(p, l, 2);
    v.require(r.counts[0].tp == 3 && r.counts[0].tn == 4 && r.counts[0].fp == 1 && r.counts[0].fn == 2,
              "worked example counts");
    v.require(r.accuracy == 0.7 && r.precision == 0.75 && r.sensitivity == 0.6, "worked example values");
    v.detail = "2- and 8-class 5x1000 pairs exact, worked example acc " + fmt("%.2f", r.accuracy) + " pre " +
               fmt("%.2f", r.precision) + " sen " + fmt("%.2f", r.sensitivity) +
               (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

// AC5 -----------------------------------------------------------------------

Verdict shapes() {
    Verdict v;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(5);
    for (std::size_t s : {32u, 64u, 96u, 224u}) {
        model::ModelConfig cfg;
        cfg.backbone.input_size = s;
        model::Model net(cfg, 3);
        const Tensor x = gradcheck::random_tensor(rng, {2, 3, s, s}, 0.0, 1.0);
        model::ForwardResult fr;
        {
            NoGradGuard guard;
            fr = net.forward_detailed(x, ops::Mode::eval);
        }
        const auto& st = fr.stages;
        const std::string tag = "S=" + std::to_string(s);
        const std::size_t h1 = st.f1.dim(2), h2 = st.f2.dim(2), h3 = st.f3.dim(2);
        v.require(h1 == 4 * h3 && h2 == 2 * h3 && st.f1.dim(3) == 4 * st.f3.dim(3) && st.f2.dim(3) == 2 * st.f3.dim(3),
                  tag + " stage ratio " + std::to_string(h1) + ":" + std::to_string(h2) + ":" + std::to_string(h3));
        v.require(h3 == s / 16, tag + " stage-3 size");
        v.require(fr.fused_map && fr.fused_map->shape() == (Shape{2, 1, h3, st.f3.dim(3)}), tag + " fused map shape");
        v.require(fr.logits.shape() == (Shape{2, 2}), tag + " logits shape");
        Initializer init(11);
        layers::NsnpModule mod(st.f3.dim(1), h3, st.f3.dim(3), init);
        Tensor pooled;
        {
            NoGradGuard guard;
            pooled = layers::nsnp_module_forward(st.f3, mod);
        }
        v.require(pooled.shape() == (Shape{2, st.f3.dim(1)}), tag + " nsnp_module output");
    }
    const double secs = seconds_since(t0);
    v.require(secs < 30, "runtime " + fmt("%.1f s", secs));
    v.detail = "S in {32,64,96,224}, " + fmt("%.1f s", secs) + (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

// AC6 / AC7 -----------------------------------------------------------------

constexpr std::size_t kToyEpochs = 50;  // one full warm-restart period

training::DataSplits toy_dataset(const fs::path& dir) {
    data::SyntheticOptions o;
    o.classes = 2;
    o.per_class = 65;
    o.size = 64;
    o.seed = 7;
    o.fractions = {100.0 / 130.0, 30.0 / 130.0, 0.0};
    data::make_synthetic(o, dir.string());
    data::DatasetOptions d;
    d.size = 64;
    d.seed = 7;
    return data::build_dataset(data::load_manifest((dir / "manifest.csv").string()), d);
}

struct ToyRun {
    std::vector<training::EpochLog> log;
    std::vector<char> checkpoint;
    double seconds;
};

ToyRun toy_train(const training::DataSplits& ds) {
    const auto t0 = Clock::now();
    model::Model net(model::ModelConfig{}, 7);
    training::TrainConfig tc;
    tc.epochs = kToyEpochs;
    tc.seed = 7;
    auto result = training::train(net, ds, tc);
    return {result.log, model::serialize_checkpoint(net), seconds_since(t0)};
}

Verdict toy_end_to_end(const training::DataSplits& ds) {
    Verdict v;
    v.require(ds.train.size() == 100 && ds.val.size() == 30, "split sizes " + std::to_string(ds.train.size()) + "/" +
                                                                std::to_string(ds.val.size()));
    const ToyRun a = toy_train(ds);
    const ToyRun b = toy_train(ds);
    const double acc = a.log.back().val_acc;
    v.require(acc >= 0.95, "val accuracy " + fmt("%.4f", acc));
    v.require(a.seconds < 600, "runtime " + fmt("%.0f s", a.seconds));
    bool same_log = a.log.size() == b.log.size();
    for (std::size_t i = 0; same_log && i < a.log.size(); ++i) {
        same_log = a.log[i].train_loss == b.log[i].train_loss && a.log[i].val_loss == b.log[i].val_loss &&
                   a.log[i].val_acc == b.log[i].val_acc;
    }
    v.require(same_log && a.checkpoint == b.checkpoint, "second run differs");
    v.detail = std::to_string(kToyEpochs) + " epochs, final val acc " + fmt("%.4f", acc) + ", " +
               fmt("%.1f s", a.seconds) + " per run, repeat run bit-identical" +
               (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

Verdict ablations(const training::DataSplits& ds) {
    Verdict v;
    std::set<std::size_t> counts;
    std::string listing;
    for (const auto& [name, msa, nsnp] : std::vector<std::tuple<std::string, bool, bool>>{
             {"backbone", false, false}, {"+nsnp", false, true}, {"+msa", true, false}, {"+nsnp+msa", true, true}}) {
        model::ModelConfig cfg;
        cfg.enable_msa = msa;
        cfg.enable_nsnp = nsnp;
        try {
            model::Model net(cfg, 1);
            training::TrainConfig tc;
            tc.epochs = 1;
            const auto r = training::train(net, ds, tc);
            v.require(r.log.size() == 1 && std::isfinite(r.log[0].train_loss), name + " did not train");
            counts.insert(net.parameter_count());
            listing += (listing.empty() ? "" : ", ") + name + " " + std::to_string(net.parameter_count());
        } catch (const std::exception& e) {
            v.require(false, name + ": " + e.what());
        }
    }
    v.require(counts.size() == 4, "parameter counts not distinct");
    v.detail = listing + (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

// AC8 -----------------------------------------------------------------------

Verdict augmentation() {
    Verdict v;
    using data::AugmentOp;
    using data::Image;
    auto from_rows = [](std::vector<std::vector<int>> rows) {
        Image img(rows[0].size(), rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<std::uint8_t>(rows[r][c]);
        return img;
    };
    v.require(data::augment(from_rows({{1, 2}, {3, 4}}), AugmentOp::parse("rot90:1")) == from_rows({{3, 1}, {4, 2}}),
              "rot90 hand example");

    const auto hflip = AugmentOp::parse("hflip"), rot = AugmentOp::parse("rot90:1"),
               sol = AugmentOp::parse("solarize:256"), eq = AugmentOp::parse("hist_eq");
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> dim(1, 16);
    std::uniform_int_distribution<int> px(0, 255);
    std::size_t broken = 0;
    for (int trial = 0; trial < 500; ++trial) {
        Image img(dim(rng), dim(rng));
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(px(rng));
        bool ok = data::augment(data::augment(img, hflip), hflip) == img;
        ok = ok && data::augment(img, data::AugmentChain{rot, rot, rot, rot}) == img;
        ok = ok && data::augment(img, sol) == img;
        Image r1 = data::augment(img, rot);
        for (std::size_t r = 0; ok && r < r1.height; ++r)
            for (std::size_t c = 0; ok && c < r1.width; ++c)
                ok = r1.at(r, c, 0) == img.at(img.height - 1 - c, r, 0);
        const Image e = data::augment(img, eq);
        for (std::size_t i = 0; ok && i < img.pixels.size(); ++i) {
            for (std::size_t j = i % 3; ok && j < img.pixels.size(); j += 3) {
                if (img.pixels[i] < img.pixels[j]) ok = e.pixels[i] <= e.pixels[j];
            }
        }
        broken += !ok;
    }
    v.require(broken == 0, std::to_string(broken) + " trials broke an identity");
    v.detail = "500 random images: hflip^2, rot90^4, solarize 256, hist_eq order, rot90 index map" +
               (v.detail.empty() ? "" : " | " + v.detail);
    return v;
}

}  // namespace

int main() {
    const fs::path tmp = fs::temp_directory_path() / ("nsnp_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    bool all = true;
    auto report = [&](const char* id, const char* title, const std::function<Verdict()>& fn) {
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        all = all && v.pass;
        std::printf("%s %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str());
        std::fflush(stdout);
    };

    report("AC1", "gradient suite", gradient_suite);
    report("AC2", "NSNP oracle equivalence", nsnp_oracle);
    report("AC3", "learning-rate schedule", schedule);
    report("AC4", "metrics oracle", metrics);
    report("AC5", "shape and ratio contracts", shapes);
    training::DataSplits toy;
    try {
        toy = toy_dataset(tmp / "toy");
    } catch (const std::exception& e) {
        std::printf("toy dataset: %s\n", e.what());
    }
    report("AC6", "toy end-to-end", [&] { return toy_end_to_end(toy); });
    report("AC7", "ablation structure", [&] { return ablations(toy); });
    report("AC8", "augmentation properties", augmentation);
    fs::remove_all(tmp);
    return all ? 0 : 1;
}
