#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>

#include "nsnp/cli.h"
#include "nsnp/error.h"
#include "nsnp/io.h"

namespace nsnp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Accumulates problems with a dotted key prefix.
struct Checker {
    std::vector<std::string> problems;

    void add(const std::string& key, const std::string& msg) { problems.push_back(key + ": " + msg); }

    bool object(const json& v, const std::string& key) {
        if (v.is_object()) return true;
        add(key, "must be an object");
        return false;
    }
    std::size_t count(const json& v, const std::string& key, std::size_t fallback) {
        if (v.is_number_unsigned()) return v.get<std::size_t>();
        add(key, "must be a non-negative integer");
        return fallback;
    }
    double real(const json& v, const std::string& key, double fallback) {
        if (v.is_number()) return v.get<double>();
        add(key, "must be a number");
        return fallback;
    }
    std::string text(const json& v, const std::string& key) {
        if (v.is_string()) return v.get<std::string>();
        add(key, "must be a string");
        return {};
    }
};

void parse_train(const json& j, training::TrainConfig& t, Checker& c) {
    if (!c.object(j, "train")) return;
    for (const auto& [key, v] : j.items()) {
        const std::string k = "train." + key;
        if (key == "batch_size") t.batch_size = c.count(v, k, t.batch_size);
        else if (key == "epochs") t.epochs = c.count(v, k, t.epochs);
        else if (key == "momentum") t.momentum = c.real(v, k, t.momentum);
        else if (key == "lr_min") t.schedule.lr_min = c.real(v, k, t.schedule.lr_min);
        else if (key == "lr_max") t.schedule.lr_max = c.real(v, k, t.schedule.lr_max);
        else if (key == "restart_period") t.schedule.first_period = c.count(v, k, t.schedule.first_period);
        else if (key == "restart_mult") t.schedule.period_mult = c.count(v, k, t.schedule.period_mult);
        else c.add(k, "unknown key");
    }
    for (const auto& p : t.problems()) c.problems.push_back("train." + p);
}

void parse_data(const json& j, RunConfig& cfg, bool& have_manifest, Checker& c) {
    if (!c.object(j, "data")) return;
    for (const auto& [key, v] : j.items()) {
        const std::string k = "data." + key;
        if (key == "manifest") {
            cfg.manifest = c.text(v, k);
            have_manifest = true;
        } else if (key == "magnification") {
            cfg.magnification = c.text(v, k);
            const auto& mags = data::magnifications();
            if (cfg.magnification != "all" && std::find(mags.begin(), mags.end(), cfg.magnification) == mags.end()) {
                c.add(k, "unknown magnification '" + cfg.magnification + "'");
            }
        } else if (key == "augment") {
            if (!v.is_array()) {
                c.add(k, "must be an array of augmentation chains");
                continue;
            }
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string chain_text = c.text(v[i], k + "[" + std::to_string(i) + "]");
                try {
                    data::parse_chain(chain_text);
                    cfg.augment.push_back(chain_text);
                } catch (const ValidationError& e) {
                    c.add(k + "[" + std::to_string(i) + "]", e.what());
                }
            }
        } else if (key == "splits") {
            if (!c.object(v, k)) continue;
            for (const auto& [part, f] : v.items()) {
                const std::string pk = k + "." + part;
                if (part == "train") cfg.splits.train = c.real(f, pk, cfg.splits.train);
                else if (part == "val") cfg.splits.val = c.real(f, pk, cfg.splits.val);
                else if (part == "test") cfg.splits.test = c.real(f, pk, cfg.splits.test);
                else c.add(pk, "unknown key");
            }
            const auto& s = cfg.splits;
            if (s.train < 0 || s.val < 0 || s.test < 0) c.add(k, "fractions must be >= 0");
            if (std::abs(s.train + s.val + s.test - 1.0) > 1e-9) c.add(k, "fractions must sum to 1");
        } else {
            c.add(k, "unknown key");
        }
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError(origin + ": top level must be an object");

    RunConfig cfg;
    Checker c;
    bool have_manifest = false;
    std::optional<std::size_t> model_classes;
    for (const auto& [key, v] : j.items()) {
        if (key == "model") {
            if (!c.object(v, key)) continue;
            if (v.contains("num_classes") && v["num_classes"].is_number_unsigned()) {
                model_classes = v["num_classes"].get<std::size_t>();
            }
            json m = v;
            m.erase("num_classes");
            try {
                cfg.model = model::model_config_from_json(m);
            } catch (const ValidationError& e) {
                // first line is the generic heading
                std::istringstream lines(e.what());
                std::string line;
                std::getline(lines, line);
                while (std::getline(lines, line)) c.problems.push_back("model." + line.substr(line.find_first_not_of(' ')));
            }
        } else if (key == "train") {
            parse_train(v, cfg.train, c);
        } else if (key == "data") {
            parse_data(v, cfg, have_manifest, c);
        } else if (key == "task") {
            cfg.task = c.count(v, key, cfg.task);
            if (cfg.task != 2 && cfg.task != 8) c.add(key, "must be 2 or 8");
        } else if (key == "seed") {
            cfg.seed = c.count(v, key, 0);
        } else if (key == "output_dir") {
            cfg.output_dir = c.text(v, key);
        } else {
            c.add(key, "unknown key");
        }
    }
    if (!have_manifest) c.add("data.manifest", "required");
    if (model_classes && *model_classes != cfg.task) {
        c.add("model.num_classes", "is " + std::to_string(*model_classes) + " but task is " + std::to_string(cfg.task));
    }
    if (!c.problems.empty()) {
        std::string msg = origin + ": invalid config:";
        for (const auto& p : c.problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }

    cfg.model.num_classes = cfg.task;
    cfg.train.seed = cfg.seed;
    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (fs::path(base_dir) / p).lexically_normal().string();
    };
    resolve(cfg.manifest);
    resolve(cfg.output_dir);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    const auto bytes = read_file(path);
    const auto dir = fs::path(path).parent_path();
    return parse_run_config(std::string(bytes.begin(), bytes.end()), path, dir.empty() ? "." : dir.string());
}

json to_json(const RunConfig& cfg) {
    const auto& t = cfg.train;
    return json{{"model", model::to_json(cfg.model)},
                {"train",
                 {{"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"momentum", t.momentum},
                  {"lr_min", t.schedule.lr_min},
                  {"lr_max", t.schedule.lr_max},
                  {"restart_period", t.schedule.first_period},
                  {"restart_mult", t.schedule.period_mult}}},
                {"data",
                 {{"manifest", cfg.manifest},
                  {"magnification", cfg.magnification},
                  {"augment", cfg.augment},
                  {"splits", {{"train", cfg.splits.train}, {"val", cfg.splits.val}, {"test", cfg.splits.test}}}}},
                {"task", cfg.task},
                {"seed", cfg.seed},
                {"output_dir", cfg.output_dir}};
}

json metrics_to_json(const training::MetricsReport& r, const std::vector<std::string>& names) {
    json classes = json::array();
    for (std::size_t k = 0; k < r.num_classes; ++k) {
        const auto& n = r.counts[k];
        classes.push_back({{"name", k < names.size() ? names[k] : std::to_string(k)},
                           {"tp", n.tp},
                           {"tn", n.tn},
                           {"fp", n.fp},
                           {"fn", n.fn},
                           {"precision", r.class_precision[k]},
                           {"recall", r.class_recall[k]}});
    }
    return json{{"num_classes", r.num_classes}, {"samples", r.samples},     {"accuracy", r.accuracy},
                {"sensitivity", r.sensitivity}, {"precision", r.precision}, {"classes", classes}};
}

}  // namespace nsnp::cli
