#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "nsnp/cli.h"
#include "nsnp/error.h"
#include "nsnp/io.h"
#include "nsnp/nn_gradcheck.h"
#include "nsnp/nsnp_system.h"
#include "nsnp/ops.h"
#include "nsnp/parallel.h"

namespace nsnp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

const training::Split& report_split(const training::DataSplits& d, std::string& name) {
    name = d.test.empty() ? "val" : "test";
    return d.test.empty() ? d.val : d.test;
}

void write_report(const fs::path& dir, const std::string& stem, const training::MetricsReport& r,
                  const std::vector<std::string>& names, const std::string& split) {
    write_file_atomic((dir / (stem + ".txt")).string(), "split: " + split + "\n" + training::format_report(r, names));
    json j = metrics_to_json(r, names);
    j["split"] = split;
    write_file_atomic((dir / (stem + ".json")).string(), j.dump(2) + "\n");
}

// Absolute paths so the file stays valid wherever it is read from.
std::string splits_manifest(const data::Manifest& m, std::vector<data::SampleRecord> recs) {
    for (auto& r : recs) {
        if (fs::path(r.path).is_relative()) r.path = fs::absolute(fs::path(m.base_dir) / r.path).lexically_normal().string();
    }
    return data::format_manifest(recs);
}

struct TrainArgs {
    std::string config;
    std::optional<std::size_t> epochs;
    std::string output_dir;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    RunConfig cfg = load_run_config(a.config);
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;

    const data::Manifest manifest = data::load_manifest(cfg.manifest);
    data::DatasetOptions d;
    d.task = cfg.task;
    d.magnification = cfg.magnification;
    d.size = cfg.model.backbone.input_size;
    for (const auto& chain_text : cfg.augment) d.augment.push_back(data::parse_chain(chain_text));
    d.fractions = cfg.splits;
    d.seed = cfg.seed;
    const auto records = data::select_records(manifest, d);
    const auto splits = data::build_dataset(manifest, d);
    out << "data: train " << splits.train.size() << ", val " << splits.val.size() << ", test " << splits.test.size()
        << "\n";

    model::Model net(cfg.model, cfg.seed);
    out << "model: " << net.parameter_count() << " parameters\n";
    const auto result = training::train(net, splits, cfg.train, [&](const training::EpochLog& e) {
        if (a.quiet) return;
        out << "epoch " << e.epoch << " lr " << fixed(e.lr, 6) << " train_loss " << fixed(e.train_loss)
            << " val_loss " << fixed(e.val_loss) << " val_acc " << fixed(e.val_acc) << "\n";
        out.flush();
    });

    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    model::save_checkpoint(net, (dir / "model.ckpt").string());
    std::ostringstream log;
    training::write_log_csv(result.log, log);
    write_file_atomic((dir / "train_log.csv").string(), log.str());
    const auto& names = data::class_names(cfg.task);
    write_report(dir, "metrics", result.final_report, names, result.final_split);
    write_file_atomic((dir / "config.json").string(), to_json(cfg).dump(2) + "\n");
    write_file_atomic((dir / "splits.csv").string(), splits_manifest(manifest, records));
    out << "final (" << result.final_split << ")\n" << training::format_report(result.final_report, names);
    out << "wrote " << (dir / "model.ckpt").string() << "\n";
    return kOk;
}

struct EvalArgs {
    std::string checkpoint, manifest, magnification = "all", report;
    std::optional<std::size_t> task;
    std::uint64_t seed = 0;
    std::size_t batch_size = 30;
};

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
    model::Model net = model::load_checkpoint(a.checkpoint);
    const std::size_t classes = net.config().num_classes;
    if (a.task && *a.task != classes) {
        throw ValidationError("class-count mismatch: checkpoint has " + std::to_string(classes) +
                              " classes, --task is " + std::to_string(*a.task));
    }
    const data::Manifest manifest = data::load_manifest(a.manifest);
    data::DatasetOptions d;
    d.task = classes;
    d.magnification = a.magnification;
    d.size = net.config().backbone.input_size;
    d.seed = a.seed;
    const auto splits = data::build_dataset(manifest, d);
    std::string split_name;
    const auto& split = report_split(splits, split_name);
    if (split.empty()) throw ValidationError("no evaluation samples in " + a.manifest);
    const auto eval = training::evaluate(net, split, a.batch_size);
    const auto& names = data::class_names(classes);
    if (!a.report.empty()) {
        const fs::path p(a.report);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_report(p.parent_path(), p.stem().string(), eval.report, names, split_name);
    }
    out << "split: " << split_name << "\n" << training::format_report(eval.report, names);
    return kOk;
}

struct SimArgs {
    std::string scenario, output;
    std::optional<std::size_t> steps;
};

int cmd_simulate(const SimArgs& a, std::ostream& out) {
    sim::Scenario sc = sim::load_scenario(a.scenario);
    if (a.steps) sc.steps = *a.steps;
    const auto trace = sim::run(sc.system, sc.steps);
    std::ostringstream csv;
    sim::write_trace_csv(trace, csv);
    if (a.output.empty()) {
        out << csv.str();
    } else {
        write_file_atomic(a.output, csv.str());
    }
    return kOk;
}

struct GradArgs {
    std::uint64_t seed = 0;
    std::optional<double> tolerance;
    std::string filter;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
    auto cases = gradcheck::all_cases();
    if (!a.filter.empty()) {
        std::erase_if(cases, [&](const gradcheck::Case& c) { return c.name.find(a.filter) == std::string::npos; });
        if (cases.empty()) throw ValidationError("no gradcheck case matches '" + a.filter + "'");
    }
    if (a.tolerance) {
        if (!(*a.tolerance > 0)) throw ValidationError("--tolerance must be > 0");
        for (auto& c : cases) c.tolerance = *a.tolerance;
    }
    const auto results = gradcheck::run(cases, a.seed);
    std::size_t failed = 0;
    out << std::left << std::setw(28) << "op" << std::setw(14) << "max_rel_err" << std::setw(11) << "tolerance"
        << std::setw(9) << "entries" << "status\n";
    for (const auto& r : results) {
        char err[32], tol[32];
        std::snprintf(err, sizeof err, "%.3e", r.max_rel_error);
        std::snprintf(tol, sizeof tol, "%.0e", r.tolerance);
        out << std::setw(28) << r.name << std::setw(14) << err << std::setw(11) << tol << std::setw(9) << r.checked
            << (r.passed ? "PASS" : "FAIL") << "\n";
        failed += !r.passed;
    }
    out << results.size() - failed << "/" << results.size() << " passed\n";
    return failed == 0 ? kOk : kNumerical;
}

struct ExportArgs {
    std::string checkpoint, image, output_dir;
};

int cmd_export_attention(const ExportArgs& a, std::ostream& out) {
    model::Model net = model::load_checkpoint(a.checkpoint);
    if (!net.has_attention()) throw ValidationError(a.checkpoint + ": model was built with enable_msa = false");
    const std::size_t s = net.config().backbone.input_size;
    const Tensor img = data::resize_bilinear(data::normalize(data::read_ppm(a.image)), s, s);
    const Tensor batch = ops::reshape(img, {1, 3, s, s});
    model::ForwardResult fr;
    {
        NoGradGuard guard;
        fr = net.forward_detailed(batch, ops::Mode::eval);
    }
    const fs::path dir(a.output_dir);
    fs::create_directories(dir);
    const std::array<std::pair<std::string, const Tensor*>, 4> maps{{{"sa_stage1.pgm", &(*fr.stage_maps)[0]},
                                                                     {"sa_stage2.pgm", &(*fr.stage_maps)[1]},
                                                                     {"sa_stage3.pgm", &(*fr.stage_maps)[2]},
                                                                     {"fused.pgm", &*fr.fused_map}}};
    for (const auto& [name, t] : maps) {
        const auto g = data::map_to_gray(*t);
        write_file_atomic((dir / name).string(), data::encode_pgm(g));
        out << name << " " << g.width << "x" << g.height << "\n";
    }
    return kOk;
}

struct SynthArgs {
    std::string output_dir;
    data::SyntheticOptions opts;
};

int cmd_make_synthetic(const SynthArgs& a, std::ostream& out) {
    const auto& f = a.opts.fractions;
    if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
    const auto recs = data::make_synthetic(a.opts, a.output_dir);
    std::size_t n[3] = {0, 0, 0};
    for (const auto& r : recs) ++n[r.split == "train" ? 0 : (r.split == "val" ? 1 : 2)];
    out << "wrote " << recs.size() << " images to " << a.output_dir << " (train " << n[0] << ", val " << n[1]
        << ", test " << n[2] << ")\n";
    return kOk;
}

struct PreviewArgs {
    std::string image, ops, output;
};

int cmd_augment_preview(const PreviewArgs& a, std::ostream& out) {
    const auto chain = data::parse_chain(a.ops);
    const auto img = data::augment(data::read_ppm(a.image), chain);
    write_file_atomic(a.output, data::encode_ppm(img));
    out << "wrote " << a.output << " (" << img.width << "x" << img.height << ")\n";
    return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"NSNP attention classifier: training, evaluation and verification tools", "nsnp"};
    app.require_subcommand(1);
    std::optional<std::size_t> threads;
    app.add_option("--threads", threads, "worker threads (default: $NSNP_THREADS or 1)")->check(CLI::PositiveNumber);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a model from a JSON run config");
    train->add_option("--config", ta.config, "run config file")->required()->check(CLI::ExistingFile);
    train->add_option("--epochs", ta.epochs, "override train.epochs");
    train->add_option("--output-dir", ta.output_dir, "override output_dir");
    train->add_flag("--quiet", ta.quiet, "no per-epoch lines");

    EvalArgs ea;
    auto* eval = app.add_subcommand("evaluate", "metrics of a checkpoint on a manifest's test split (val if empty)");
    eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", ea.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--task", ea.task, "expected class count (2 or 8)");
    eval->add_option("--magnification", ea.magnification, "magnification filter")->capture_default_str();
    eval->add_option("--seed", ea.seed, "seed for rows without a split")->capture_default_str();
    eval->add_option("--batch-size", ea.batch_size, "evaluation batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    eval->add_option("--report", ea.report, "also write <stem>.txt and <stem>.json, e.g. out/eval.txt");

    SimArgs sa;
    auto* simulate = app.add_subcommand("simulate", "run an NSNP system scenario and print its trace CSV");
    simulate->add_option("--scenario", sa.scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--output", sa.output, "trace CSV path (default stdout)");
    simulate->add_option("--steps", sa.steps, "override the scenario's step count");

    GradArgs ga;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    grad->add_option("--seed", ga.seed, "random seed")->capture_default_str();
    grad->add_option("--tolerance", ga.tolerance, "max relative error for every case (default per case)");
    grad->add_option("--filter", ga.filter, "only cases whose name contains this");

    ExportArgs xa;
    auto* exp = app.add_subcommand("export-attention", "write SA(F1..F3) and the fused map as PGM files");
    exp->add_option("--checkpoint", xa.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    exp->add_option("--image", xa.image, "input PPM, resized to the model input size")
        ->required()
        ->check(CLI::ExistingFile);
    exp->add_option("--output-dir", xa.output_dir, "directory for the PGM files")->required();

    SynthArgs ya;
    auto* synth = app.add_subcommand("make-synthetic", "write a class-separable toy dataset with a manifest");
    synth->add_option("--output-dir", ya.output_dir, "target directory")->required();
    synth->add_option("--classes", ya.opts.classes, "2 or 8")->capture_default_str()->check(CLI::IsMember({2, 8}));
    synth->add_option("--per-class", ya.opts.per_class, "images per class")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    synth->add_option("--size", ya.opts.size, "image side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--seed", ya.opts.seed, "random seed")->capture_default_str();
    synth->add_option("--train", ya.opts.fractions.train, "train fraction")->capture_default_str();
    synth->add_option("--val", ya.opts.fractions.val, "validation fraction")->capture_default_str();
    synth->add_option("--test", ya.opts.fractions.test, "test fraction")->capture_default_str();

    PreviewArgs pa;
    auto* preview = app.add_subcommand("augment-preview", "apply an augmentation chain to one PPM");
    preview->add_option("--image", pa.image, "input PPM")->required()->check(CLI::ExistingFile);
    preview->add_option("--ops", pa.ops, "chain such as rot90:1+hist_eq")->required();
    preview->add_option("--output", pa.output, "output PPM")->required();

    std::vector<std::string> argv_store{"nsnp"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kInvalid;
    }

    try {
        if (threads) set_num_threads(*threads);
        if (*train) return cmd_train(ta, out);
        if (*eval) return cmd_evaluate(ea, out);
        if (*simulate) return cmd_simulate(sa, out);
        if (*grad) return cmd_gradcheck(ga, out);
        if (*exp) return cmd_export_attention(xa, out);
        if (*synth) return cmd_make_synthetic(ya, out);
        if (*preview) return cmd_augment_preview(pa, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

}  // namespace nsnp::cli
