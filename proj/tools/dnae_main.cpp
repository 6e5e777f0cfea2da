// dnae: command-line surface for the synthetic-ignition surrogate pipeline.
//
// Subcommands: gen-data, train-ae, encode, train-node, predict, classify,
// sample, report. Every run writes resolved_config.json next to its outputs;
// reruns with identical flags produce identical bytes (timestamps appear only
// in per-iteration log CSVs).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dnae/autoencoder.hpp"
#include "dnae/classifier.hpp"
#include "dnae/curriculum.hpp"
#include "dnae/dataset.hpp"
#include "dnae/errors.hpp"
#include "dnae/logging.hpp"
#include "dnae/metrics.hpp"
#include "dnae/node.hpp"
#include "dnae/param_space.hpp"
#include "dnae/sampler.hpp"
#include "dnae/serialize.hpp"
#include "dnae/synth.hpp"
#include "dnae/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --log-level handling; the DNAE_LOG environment variable wins when set
void apply_log_level(const std::string& level) {
    if (std::getenv("DNAE_LOG") != nullptr) return;
    if (level == "debug")
        dnae::set_log_level(dnae::LogLevel::debug);
    else if (level == "info")
        dnae::set_log_level(dnae::LogLevel::info);
    else if (level == "warn")
        dnae::set_log_level(dnae::LogLevel::warn);
    else if (level == "error")
        dnae::set_log_level(dnae::LogLevel::error);
    else if (level == "off")
        dnae::set_log_level(dnae::LogLevel::off);
    else
        throw dnae::ValueError("unknown log level: " + level);
}

void write_config_snapshot(const fs::path& out_dir, const std::string& command, json flags) {
    fs::create_directories(out_dir);
    json j;
    j["command"] = command;
    j["flags"] = std::move(flags);
    dnae::write_text_file(out_dir / "resolved_config.json", j.dump(2) + "\n");
}

std::string csv_of(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

dnae::ParamVector parse_xi(const std::vector<double>& values) {
    if (values.size() != dnae::kParamCount)
        throw dnae::ValueError("--xi needs " + std::to_string(dnae::kParamCount) +
                               " comma-separated values, got " + std::to_string(values.size()));
    dnae::ParamVector xi;
    for (int i = 0; i < dnae::kParamCount; ++i) xi[i] = values[static_cast<std::size_t>(i)];
    return xi;
}

std::pair<int, int> parse_axis_pair(const std::string& text) {
    const std::size_t sep = text.find_first_of(":,");
    if (sep == std::string::npos)
        throw dnae::ValueError("axis pair '" + text + "' must look like A:B");
    const int a = std::stoi(text.substr(0, sep));
    const int b = std::stoi(text.substr(sep + 1));
    return {a, b};
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string out;
    int trials = 300;
    int snapshots = 20;
    int grid_h = 96;
    int grid_w = 48;
    double pixel_mm = 0.125;
    double horizon_us = 500.0;
    unsigned long long seed = 2024;
    std::string log_level = "info";
};

int run_gen_data(const GenDataArgs& a) {
    apply_log_level(a.log_level);
    dnae::SynthConfig cfg;
    cfg.n_trials = a.trials;
    cfg.n_snapshots = a.snapshots;
    cfg.grid_h = a.grid_h;
    cfg.grid_w = a.grid_w;
    cfg.pixel_mm = a.pixel_mm;
    cfg.horizon_us = a.horizon_us;
    cfg.seed = a.seed;
    dnae::build_dataset(cfg, a.out);
    write_config_snapshot(a.out, "gen-data",
                          {{"out", a.out},
                           {"trials", a.trials},
                           {"snapshots", a.snapshots},
                           {"grid_h", a.grid_h},
                           {"grid_w", a.grid_w},
                           {"pixel_mm", a.pixel_mm},
                           {"horizon_us", a.horizon_us},
                           {"seed", a.seed}});
    return 0;
}

// ---------------------------------------------------------------- train-ae

struct TrainAeArgs {
    std::string data, out;
    std::vector<int> latent_dims{8};
    std::vector<int> channels{16, 32, 64};
    int fc_width = 64;
    int kernel = 3;
    double beta = 1e-6;
    int epochs = 40;
    int batch = 16;
    double val_fraction = 0.1;
    double target_val_mse = 0.0;
    int steps_per_epoch = 0;
    double lr = 1e-3;
    unsigned long long seed = 42;
    unsigned long long shuffle_seed = 7;
    std::string log_level = "info";
};

void write_ae_loss_csv(const fs::path& file, const std::vector<dnae::AeEpochStats>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_mse,lr\n";
    for (const auto& e : history)
        out << e.epoch << ',' << dnae::fmt_double(e.train_loss) << ','
            << dnae::fmt_double(e.val_mse) << ',' << dnae::fmt_double(e.lr) << '\n';
    dnae::write_text_file(file, out.str());
}

int run_train_ae(const TrainAeArgs& a) {
    apply_log_level(a.log_level);
    const dnae::Dataset data = dnae::Dataset::load(a.data);
    fs::create_directories(a.out);
    const bool sweep = a.latent_dims.size() > 1;
    for (int dim : a.latent_dims) {
        dnae::AeConfig cfg;
        cfg.latent_dim = dim;
        cfg.block_channels = a.channels;
        cfg.fc_width = a.fc_width;
        cfg.kernel = a.kernel;
        cfg.beta = a.beta;
        cfg.input_h = data.grid_h;
        cfg.input_w = data.grid_w;
        cfg.seed = a.seed;
        dnae::Autoencoder ae(cfg);

        dnae::AdamConfig adam;
        adam.lr0 = a.lr;
        dnae::TrainAeOptions opt;
        opt.max_epochs = a.epochs;
        opt.batch_size = a.batch;
        opt.val_fraction = a.val_fraction;
        opt.target_val_mse = a.target_val_mse;
        opt.steps_per_epoch = a.steps_per_epoch;
        opt.shuffle_seed = a.shuffle_seed;

        const auto result = dnae::train_ae(ae, data, adam, opt);
        const fs::path model_dir =
            sweep ? fs::path(a.out) / ("L" + std::to_string(dim)) / "model"
                  : fs::path(a.out) / "model";
        const fs::path loss_csv =
            sweep ? fs::path(a.out) / ("ae_loss_L" + std::to_string(dim) + ".csv")
                  : fs::path(a.out) / "ae_loss.csv";
        ae.save(model_dir);
        write_ae_loss_csv(loss_csv, result.history);
        std::cout << "latent_dim " << dim << ": val_mse "
                  << dnae::fmt_double(result.final_val_mse) << "\n";
    }
    write_config_snapshot(a.out, "train-ae",
                          {{"data", a.data},
                           {"out", a.out},
                           {"latent_dims", a.latent_dims},
                           {"channels", csv_of(a.channels)},
                           {"fc_width", a.fc_width},
                           {"kernel", a.kernel},
                           {"beta", a.beta},
                           {"epochs", a.epochs},
                           {"batch", a.batch},
                           {"val_fraction", a.val_fraction},
                           {"target_val_mse", a.target_val_mse},
                           {"steps_per_epoch", a.steps_per_epoch},
                           {"lr", a.lr},
                           {"seed", a.seed},
                           {"shuffle_seed", a.shuffle_seed}});
    return 0;
}

// ------------------------------------------------------------------ encode

struct EncodeArgs {
    std::string data, model, out;
    double val_fraction = 0.1;
    double length_scale = 0.0;
    double ridge = 1e-8;
    std::string log_level = "info";
};

int run_encode(const EncodeArgs& a) {
    apply_log_level(a.log_level);
    const dnae::Dataset data = dnae::Dataset::load(a.data);
    const dnae::Autoencoder ae = dnae::Autoencoder::load(a.model);
    const dnae::TrajectorySet set = dnae::encode_dataset(ae, data, a.val_fraction);
    dnae::save_trajectories(a.out, set);

    // RBF over the training-split initial latents; its ensemble bounds drive
    // the campaign's rejection sampling
    std::vector<dnae::ParamVector> xis;
    std::vector<std::vector<double>> v0;
    for (const auto& tr : set.items) {
        if (tr.split != "train") continue;
        xis.push_back(tr.xi);
        v0.emplace_back(tr.state(0), tr.state(0) + set.latent_dim);
    }
    const dnae::RbfModel rbf = dnae::fit_rbf(xis, v0, a.length_scale, a.ridge);
    rbf.save(fs::path(a.out) / "rbf.json");

    write_config_snapshot(a.out, "encode",
                          {{"data", a.data},
                           {"model", a.model},
                           {"out", a.out},
                           {"val_fraction", a.val_fraction},
                           {"length_scale", a.length_scale},
                           {"ridge", a.ridge}});
    return 0;
}

// -------------------------------------------------------------- train-node

struct TrainNodeArgs {
    std::string trajectories, out;
    int hidden_width = 400;
    int upsample = 10;
    int folds = 50;
    double epsilon = 1e-4;
    double lambda = 1e-2;
    long max_iters = 20000;
    double lr = 1e-3;
    unsigned long long seed = 42;
    int threads = 1;
    long checkpoint_every = 0;
    long stall_patience = 20000;
    bool no_curvature_advance = false;
    std::string log_level = "info";
};

int run_train_node(const TrainNodeArgs& a) {
    apply_log_level(a.log_level);
    const dnae::TrajectorySet raw = dnae::load_trajectories(a.trajectories);
    if (raw.items.empty()) throw dnae::ValueError("no trajectories in " + a.trajectories);
    const dnae::TrajectorySet up = dnae::upsample_trajectories(raw, a.upsample, a.folds);

    dnae::NodeConfig cfg;
    cfg.latent_dim = up.latent_dim;
    cfg.hidden_width = a.hidden_width;
    cfg.t0_us = up.items[0].times_us.front();
    cfg.t_end_us = up.items[0].times_us.back();
    cfg.dt_us = (cfg.t_end_us - cfg.t0_us) / (up.items[0].n_points() - 1);
    cfg.lambda = a.lambda;
    cfg.seed = a.seed;
    dnae::NodeMlp model(cfg);

    dnae::AdamConfig adam = dnae::AdamConfig::scaled_to(a.max_iters);
    adam.lr0 = a.lr;
    dnae::CurriculumState curriculum;
    curriculum.n_folds = a.folds;
    curriculum.epsilon = a.epsilon;
    curriculum.upsample_factor = a.upsample;
    curriculum.advance_uses_curvature = !a.no_curvature_advance;
    curriculum.stall_patience = a.stall_patience;

    fs::create_directories(a.out);
    dnae::TrainNodeOptions opt;
    opt.threads = a.threads;
    opt.log_csv = fs::path(a.out) / "train_log.csv";
    if (a.checkpoint_every > 0) {
        opt.checkpoint_dir = fs::path(a.out) / "checkpoints";
        opt.checkpoint_every = a.checkpoint_every;
    }
    const auto result = dnae::train_node(up, model, adam, curriculum, opt);
    model.save(fs::path(a.out) / "model");

    std::ostringstream events;
    events << "iteration,active_folds\n";
    for (const auto& [iter, folds] : curriculum.event_log) events << iter << ',' << folds << '\n';
    dnae::write_text_file(fs::path(a.out) / "events.csv", events.str());

    json summary;
    summary["iterations"] = result.iterations;
    summary["final_loss"] = result.final_loss;
    summary["active_folds"] = curriculum.active_folds;
    summary["reached_full_horizon"] = result.reached_full_horizon;
    summary["converged"] = result.converged;
    dnae::write_text_file(fs::path(a.out) / "train_summary.json", summary.dump(2) + "\n");

    write_config_snapshot(a.out, "train-node",
                          {{"trajectories", a.trajectories},
                           {"out", a.out},
                           {"hidden_width", a.hidden_width},
                           {"upsample", a.upsample},
                           {"folds", a.folds},
                           {"epsilon", a.epsilon},
                           {"lambda", a.lambda},
                           {"max_iters", a.max_iters},
                           {"lr", a.lr},
                           {"seed", a.seed},
                           {"threads", a.threads},
                           {"checkpoint_every", a.checkpoint_every},
                           {"stall_patience", a.stall_patience},
                           {"advance_uses_curvature", !a.no_curvature_advance}});
    std::cout << "train-node: " << result.iterations << " iterations, active_folds "
              << curriculum.active_folds << "/" << a.folds << ", final loss "
              << dnae::fmt_double(result.final_loss) << "\n";
    return result.reached_full_horizon ? 0 : 2;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
    std::string model, out;
    std::vector<double> xi;
    std::string rbf;
    std::string v0_file;
    std::string ae;
    bool decode = false;
    int decode_stride = 10;
    double iso_threshold = 0.5;
    int window = 5;
    std::string log_level = "info";
};

int run_predict(const PredictArgs& a) {
    apply_log_level(a.log_level);
    const dnae::ParamVector xi = parse_xi(a.xi);
    dnae::validate(xi);
    const dnae::NodeMlp model = dnae::NodeMlp::load(a.model);
    const int L = model.config().latent_dim;

    std::vector<double> v0;
    if (!a.rbf.empty() == !a.v0_file.empty())
        throw dnae::ValueError("predict needs exactly one of --rbf or --v0-file");
    if (!a.rbf.empty()) {
        v0 = dnae::RbfModel::load(a.rbf).eval(xi);
    } else {
        const auto t = dnae::read_tensor(a.v0_file);
        if (t->size() != static_cast<std::size_t>(L))
            throw dnae::ValueError("--v0-file holds " + std::to_string(t->size()) +
                                   " values, model wants " + std::to_string(L));
        v0 = t->data;
    }
    if (static_cast<int>(v0.size()) != L)
        throw dnae::ValueError("initial latent dim mismatch against model");

    const std::vector<double> times = model.config().uniform_grid();
    const dnae::Trajectory traj = dnae::integrate(model, v0, xi, times);

    fs::create_directories(a.out);
    std::ostringstream tcsv;
    tcsv << "t_us";
    for (int c = 0; c < L; ++c) tcsv << ",v" << c;
    tcsv << '\n';
    for (int t = 0; t < traj.n_points(); ++t) {
        tcsv << dnae::fmt_double(traj.times_us[static_cast<std::size_t>(t)]);
        for (int c = 0; c < L; ++c) tcsv << ',' << dnae::fmt_double(traj.state(t)[c]);
        tcsv << '\n';
    }
    dnae::write_text_file(fs::path(a.out) / "trajectory.csv", tcsv.str());

    json result;
    result["t_end_us"] = traj.times_us.back();

    if (a.decode) {
        if (a.ae.empty()) throw dnae::ValueError("--decode needs --ae MODEL_DIR");
        const dnae::Autoencoder ae = dnae::Autoencoder::load(a.ae);
        if (ae.config().latent_dim != L)
            throw dnae::ValueError("autoencoder latent dim differs from the dynamics model");
        const fs::path frame_dir = fs::path(a.out) / "frames";
        fs::create_directories(frame_dir);
        std::vector<dnae::Field> frames;
        std::vector<double> frame_times;
        const int stride = std::max(1, a.decode_stride);
        for (int t = 0; t < traj.n_points(); t += stride) {
            std::vector<double> v(traj.state(t), traj.state(t) + L);
            dnae::Field f = ae.decode(v);
            frames.push_back(f);
            frame_times.push_back(traj.times_us[static_cast<std::size_t>(t)]);
            char name[32];
            std::snprintf(name, sizeof name, "frame_%04d.dnt", t);
            dnae::write_tensor(frame_dir / name, *dnae::field_to_tensor(f));
        }
        const dnae::IsothermSeries series =
            dnae::isotherm_series(frames, frame_times, a.iso_threshold);
        std::ostringstream acsv;
        acsv << "t_us,area_px\n";
        for (std::size_t i = 0; i < series.areas.size(); ++i)
            acsv << dnae::fmt_double(series.times_us[i]) << ','
                 << dnae::fmt_double(series.areas[i]) << '\n';
        dnae::write_text_file(fs::path(a.out) / "isotherm_areas.csv", acsv.str());
        const bool success = dnae::classify_by_area(series, a.window);
        result["area_label"] = success ? "success" : "failure";
        std::cout << "predict: area classifier says " << (success ? "success" : "failure")
                  << "\n";
    }
    dnae::write_text_file(fs::path(a.out) / "prediction.json", result.dump(2) + "\n");

    write_config_snapshot(a.out, "predict",
                          {{"model", a.model},
                           {"out", a.out},
                           {"xi", a.xi},
                           {"rbf", a.rbf},
                           {"v0_file", a.v0_file},
                           {"ae", a.ae},
                           {"decode", a.decode},
                           {"decode_stride", a.decode_stride},
                           {"iso_threshold", a.iso_threshold},
                           {"window", a.window}});
    return 0;
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
    std::string trajectories, out;
    std::string calibration;   // reuse an existing calib.json instead of fitting
    std::string log_level = "info";
};

void write_confusion_csv(const fs::path& file,
                         const std::vector<std::pair<std::string, dnae::ConfusionMatrix>>& rows) {
    std::ostringstream out;
    out << "split,tp,fp,tn,fn,accuracy\n";
    for (const auto& [split, cm] : rows)
        out << split << ',' << cm.tp << ',' << cm.fp << ',' << cm.tn << ',' << cm.fn << ','
            << dnae::fmt_double(cm.accuracy()) << '\n';
    dnae::write_text_file(file, out.str());
}

int run_classify(const ClassifyArgs& a) {
    apply_log_level(a.log_level);
    const dnae::TrajectorySet set = dnae::load_trajectories(a.trajectories);
    if (set.items.empty()) throw dnae::ValueError("no trajectories in " + a.trajectories);

    dnae::BranchClassifier cls;
    if (!a.calibration.empty()) {
        cls = dnae::BranchClassifier::load(a.calibration);
    } else {
        std::vector<dnae::Trajectory> train;
        for (const auto& tr : set.items)
            if (tr.split == "train" && tr.outcome >= 0) train.push_back(tr);
        if (train.empty())
            throw dnae::ValueError("no labeled training-split trajectories to calibrate on");
        cls = dnae::calibrate_branch(train);
    }
    fs::create_directories(a.out);
    cls.save(fs::path(a.out) / "calib.json");

    std::ostringstream labels;
    labels << "trial_id,split,outcome,predicted\n";
    std::vector<int> pred_train, act_train, pred_val, act_val, pred_all, act_all;
    for (const auto& tr : set.items) {
        const int predicted = cls.classify(tr) ? 1 : 0;
        labels << tr.trial_id << ',' << tr.split << ',' << tr.outcome << ',' << predicted << '\n';
        if (tr.outcome < 0) continue;
        pred_all.push_back(predicted);
        act_all.push_back(tr.outcome);
        if (tr.split == "train") {
            pred_train.push_back(predicted);
            act_train.push_back(tr.outcome);
        } else if (tr.split == "val") {
            pred_val.push_back(predicted);
            act_val.push_back(tr.outcome);
        }
    }
    dnae::write_text_file(fs::path(a.out) / "labels.csv", labels.str());

    std::vector<std::pair<std::string, dnae::ConfusionMatrix>> rows;
    if (!pred_train.empty()) rows.emplace_back("train", dnae::confusion(pred_train, act_train));
    if (!pred_val.empty()) rows.emplace_back("val", dnae::confusion(pred_val, act_val));
    if (!pred_all.empty()) rows.emplace_back("all", dnae::confusion(pred_all, act_all));
    write_confusion_csv(fs::path(a.out) / "confusion.csv", rows);
    for (const auto& [split, cm] : rows)
        std::cout << "classify " << split << ": accuracy " << dnae::fmt_double(cm.accuracy())
                  << " (" << cm.total() << " trials)\n";

    write_config_snapshot(a.out, "classify",
                          {{"trajectories", a.trajectories},
                           {"out", a.out},
                           {"calibration", a.calibration},
                           {"component", cls.component},
                           {"threshold", cls.threshold},
                           {"sign", cls.sign}});
    return 0;
}

// ------------------------------------------------------------------ sample

struct SampleArgs {
    std::string model, rbf, calibration, out;
    long n = 100000;
    unsigned long long seed = 7;
    int threads = 1;
    int bins = 25;
    bool pgm = false;
    std::vector<std::string> pairs{"2:5", "2:4"};
    std::string log_level = "info";
};

int run_sample(const SampleArgs& a) {
    apply_log_level(a.log_level);
    const dnae::NodeMlp model = dnae::NodeMlp::load(a.model);
    const dnae::RbfModel rbf = dnae::RbfModel::load(a.rbf);
    const dnae::BranchClassifier cls = dnae::BranchClassifier::load(a.calibration);

    dnae::CampaignConfig cfg;
    cfg.n_samples = a.n;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    cfg.map_bins = a.bins;
    cfg.write_pgm = a.pgm;
    cfg.axis_pairs.clear();
    for (const auto& p : a.pairs) cfg.axis_pairs.push_back(parse_axis_pair(p));

    const dnae::CampaignSummary summary = dnae::run_campaign(model, rbf, cls, cfg, a.out);
    std::cout << "sample: " << summary.n_samples << " samples, " << summary.n_success
              << " success, " << summary.n_failure << " failure, " << summary.n_invalid
              << " invalid; fraction " << dnae::fmt_double(summary.success_fraction()) << "\n";

    write_config_snapshot(a.out, "sample",
                          {{"model", a.model},
                           {"rbf", a.rbf},
                           {"calibration", a.calibration},
                           {"out", a.out},
                           {"n", a.n},
                           {"seed", a.seed},
                           {"threads", a.threads},
                           {"bins", a.bins},
                           {"pgm", a.pgm},
                           {"pairs", a.pairs}});
    return 0;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
    std::string out;
    std::string trajectories;
    std::string node;
    std::string calibration;
    std::string records;
    int upsample = 10;
    std::string log_level = "info";
};

double median_of(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void report_quarters(const ReportArgs& a) {
    const dnae::TrajectorySet raw = dnae::load_trajectories(a.trajectories);
    const dnae::TrajectorySet up = dnae::upsample_trajectories(raw, a.upsample, 1);
    const dnae::NodeMlp model = dnae::NodeMlp::load(a.node);

    std::ostringstream csv;
    csv << "trial_id,split,frechet_q1,frechet_q2,frechet_q3,frechet_q4,"
           "l2_q1,l2_q2,l2_q3,l2_q4\n";
    std::array<std::vector<double>, 4> fre, l2;   // aggregated per quarter
    long divergent = 0;
    for (const auto& truth : up.items) {
        std::vector<double> v0(truth.state(0), truth.state(0) + truth.latent_dim());
        dnae::Trajectory pred;
        try {
            pred = dnae::integrate(model, v0, truth.xi, truth.times_us);
        } catch (const dnae::DivergenceError&) {
            ++divergent;
            continue;
        }
        const dnae::QuarterErrors qe = dnae::quarter_errors(pred, truth);
        csv << truth.trial_id << ',' << truth.split;
        for (double x : qe.frechet) csv << ',' << dnae::fmt_double(x);
        for (double x : qe.l2) csv << ',' << dnae::fmt_double(x);
        csv << '\n';
        for (int q = 0; q < 4; ++q) {
            fre[static_cast<std::size_t>(q)].push_back(qe.frechet[static_cast<std::size_t>(q)]);
            l2[static_cast<std::size_t>(q)].push_back(qe.l2[static_cast<std::size_t>(q)]);
        }
    }
    dnae::write_text_file(fs::path(a.out) / "quarter_errors.csv", csv.str());
    if (divergent > 0)
        dnae::log_warn("report: " + std::to_string(divergent) + " trajectories diverged");

    std::ostringstream med;
    med << "metric,q1,q2,q3,q4\n";
    med << "frechet_median";
    for (int q = 0; q < 4; ++q)
        med << ',' << dnae::fmt_double(median_of(fre[static_cast<std::size_t>(q)]));
    med << "\nl2_median";
    for (int q = 0; q < 4; ++q)
        med << ',' << dnae::fmt_double(median_of(l2[static_cast<std::size_t>(q)]));
    med << '\n';
    dnae::write_text_file(fs::path(a.out) / "quarter_medians.csv", med.str());
    std::cout << "report: quarter medians written (frechet q1 "
              << dnae::fmt_double(median_of(fre[0])) << ", q4 "
              << dnae::fmt_double(median_of(fre[3])) << ")\n";
}

void report_confusion(const ReportArgs& a) {
    const dnae::TrajectorySet set = dnae::load_trajectories(a.trajectories);
    const dnae::BranchClassifier cls = dnae::BranchClassifier::load(a.calibration);
    std::vector<int> pred, act;
    for (const auto& tr : set.items) {
        if (tr.outcome < 0) continue;
        pred.push_back(cls.classify(tr) ? 1 : 0);
        act.push_back(tr.outcome);
    }
    if (pred.empty()) throw dnae::ValueError("report: no labeled trajectories for confusion");
    write_confusion_csv(fs::path(a.out) / "confusion.csv",
                        {{"all", dnae::confusion(pred, act)}});
}

void report_records(const ReportArgs& a) {
    const auto records = dnae::read_records_csv(a.records);
    if (records.empty())
        throw dnae::ValueError("records file " + a.records + " contains no records");
    long succ = 0, valid = 0;
    std::array<std::vector<double>, dnae::kParamCount> xi_succ, xi_fail;
    for (const auto& r : records) {
        if (r.label < 0) continue;
        ++valid;
        succ += r.label;
        for (int i = 0; i < dnae::kParamCount; ++i)
            (r.label == 1 ? xi_succ : xi_fail)[static_cast<std::size_t>(i)].push_back(r.xi[i]);
    }
    if (valid == 0) throw dnae::ValueError("records hold no valid (non-divergent) samples");

    const auto [lo, hi] = dnae::wilson_interval(succ, valid);
    std::ostringstream wcsv;
    wcsv << "n,successes,fraction,wilson_lo,wilson_hi\n";
    wcsv << valid << ',' << succ << ','
         << dnae::fmt_double(static_cast<double>(succ) / static_cast<double>(valid)) << ','
         << dnae::fmt_double(lo) << ',' << dnae::fmt_double(hi) << '\n';
    dnae::write_text_file(fs::path(a.out) / "wilson.csv", wcsv.str());

    // rank components by how differently they distribute across the two
    // outcome classes
    std::vector<std::pair<double, int>> ranking;
    for (int i = 0; i < dnae::kParamCount; ++i) {
        double kl = 0.0;
        const auto& s = xi_succ[static_cast<std::size_t>(i)];
        const auto& f = xi_fail[static_cast<std::size_t>(i)];
        if (!s.empty() && !f.empty()) kl = dnae::kl_divergence(s, f);
        ranking.emplace_back(kl, i);
    }
    std::stable_sort(ranking.begin(), ranking.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    std::ostringstream kcsv;
    kcsv << "rank,component,name,kl_nats\n";
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        const int i = ranking[r].second;
        kcsv << r << ',' << i << ',' << dnae::param_table()[static_cast<std::size_t>(i)].name
             << ',' << dnae::fmt_double(ranking[r].first) << '\n';
    }
    dnae::write_text_file(fs::path(a.out) / "kl_ranking.csv", kcsv.str());
    std::cout << "report: ignition fraction " << dnae::fmt_double(double(succ) / double(valid))
              << " wilson [" << dnae::fmt_double(lo) << ", " << dnae::fmt_double(hi)
              << "], top KL component xi" << ranking[0].second << "\n";
}

int run_report(const ReportArgs& a) {
    apply_log_level(a.log_level);
    if (a.trajectories.empty() && a.records.empty())
        throw dnae::ValueError("report needs --trajectories and/or --records");
    fs::create_directories(a.out);
    if (!a.trajectories.empty() && !a.node.empty()) report_quarters(a);
    if (!a.trajectories.empty() && !a.calibration.empty()) report_confusion(a);
    if (!a.records.empty()) report_records(a);
    write_config_snapshot(a.out, "report",
                          {{"out", a.out},
                           {"trajectories", a.trajectories},
                           {"node", a.node},
                           {"calibration", a.calibration},
                           {"records", a.records},
                           {"upsample", a.upsample}});
    return 0;
}

void add_log_flag(CLI::App* cmd, std::string& level) {
    cmd->add_option("--log-level", level, "debug|info|warn|error|off")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dnae: dynamical-autoencoder surrogate pipeline"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic snapshot dataset");
    cmd_gen->add_option("--out", gen.out)->required();
    cmd_gen->add_option("--trials", gen.trials)->capture_default_str();
    cmd_gen->add_option("--snapshots", gen.snapshots)->capture_default_str();
    cmd_gen->add_option("--grid-h", gen.grid_h)->capture_default_str();
    cmd_gen->add_option("--grid-w", gen.grid_w)->capture_default_str();
    cmd_gen->add_option("--pixel-mm", gen.pixel_mm)->capture_default_str();
    cmd_gen->add_option("--horizon-us", gen.horizon_us)->capture_default_str();
    cmd_gen->add_option("--seed", gen.seed)->capture_default_str();
    add_log_flag(cmd_gen, gen.log_level);

    TrainAeArgs tae;
    auto* cmd_tae = app.add_subcommand("train-ae", "train the field autoencoder");
    cmd_tae->add_option("--data", tae.data)->required();
    cmd_tae->add_option("--out", tae.out)->required();
    cmd_tae->add_option("--latent-dim", tae.latent_dims)->delimiter(',')->capture_default_str();
    cmd_tae->add_option("--channels", tae.channels)->delimiter(',')->capture_default_str();
    cmd_tae->add_option("--fc-width", tae.fc_width)->capture_default_str();
    cmd_tae->add_option("--kernel", tae.kernel)->capture_default_str();
    cmd_tae->add_option("--beta", tae.beta)->capture_default_str();
    cmd_tae->add_option("--epochs", tae.epochs)->capture_default_str();
    cmd_tae->add_option("--batch", tae.batch)->capture_default_str();
    cmd_tae->add_option("--val-fraction", tae.val_fraction)->capture_default_str();
    cmd_tae->add_option("--target-val-mse", tae.target_val_mse)->capture_default_str();
    cmd_tae->add_option("--steps-per-epoch", tae.steps_per_epoch)->capture_default_str();
    cmd_tae->add_option("--lr", tae.lr)->capture_default_str();
    cmd_tae->add_option("--seed", tae.seed)->capture_default_str();
    cmd_tae->add_option("--shuffle-seed", tae.shuffle_seed)->capture_default_str();
    add_log_flag(cmd_tae, tae.log_level);

    EncodeArgs enc;
    auto* cmd_enc = app.add_subcommand("encode", "encode a dataset into latent trajectories");
    cmd_enc->add_option("--data", enc.data)->required();
    cmd_enc->add_option("--model", enc.model)->required();
    cmd_enc->add_option("--out", enc.out)->required();
    cmd_enc->add_option("--val-fraction", enc.val_fraction)->capture_default_str();
    cmd_enc->add_option("--length-scale", enc.length_scale)->capture_default_str();
    cmd_enc->add_option("--ridge", enc.ridge)->capture_default_str();
    add_log_flag(cmd_enc, enc.log_level);

    TrainNodeArgs tno;
    auto* cmd_tno = app.add_subcommand("train-node", "curriculum-train the latent dynamics");
    cmd_tno->add_option("--trajectories", tno.trajectories)->required();
    cmd_tno->add_option("--out", tno.out)->required();
    cmd_tno->add_option("--hidden-width", tno.hidden_width)->capture_default_str();
    cmd_tno->add_option("--upsample", tno.upsample)->capture_default_str();
    cmd_tno->add_option("--folds", tno.folds)->capture_default_str();
    cmd_tno->add_option("--epsilon", tno.epsilon)->capture_default_str();
    cmd_tno->add_option("--lambda", tno.lambda)->capture_default_str();
    cmd_tno->add_option("--max-iters", tno.max_iters)->capture_default_str();
    cmd_tno->add_option("--lr", tno.lr)->capture_default_str();
    cmd_tno->add_option("--seed", tno.seed)->capture_default_str();
    cmd_tno->add_option("--threads", tno.threads)->capture_default_str();
    cmd_tno->add_option("--checkpoint-every", tno.checkpoint_every)->capture_default_str();
    cmd_tno->add_option("--stall-patience", tno.stall_patience)->capture_default_str();
    cmd_tno->add_flag("--no-curvature-advance", tno.no_curvature_advance,
                      "advance on the position term alone");
    add_log_flag(cmd_tno, tno.log_level);

    PredictArgs pre;
    auto* cmd_pre = app.add_subcommand("predict", "integrate one operating point");
    cmd_pre->add_option("--model", pre.model)->required();
    cmd_pre->add_option("--out", pre.out)->required();
    cmd_pre->add_option("--xi", pre.xi, "15 comma-separated values")
        ->delimiter(',')
        ->required();
    cmd_pre->add_option("--rbf", pre.rbf, "initial latent from this RBF file");
    cmd_pre->add_option("--v0-file", pre.v0_file, "initial latent from a DNT1 tensor");
    cmd_pre->add_option("--ae", pre.ae, "autoencoder dir (for --decode)");
    cmd_pre->add_flag("--decode", pre.decode, "decode frames and run the area classifier");
    cmd_pre->add_option("--decode-stride", pre.decode_stride)->capture_default_str();
    cmd_pre->add_option("--iso-threshold", pre.iso_threshold)->capture_default_str();
    cmd_pre->add_option("--window", pre.window)->capture_default_str();
    add_log_flag(cmd_pre, pre.log_level);

    ClassifyArgs cla;
    auto* cmd_cla = app.add_subcommand("classify", "calibrate/apply the latent branch classifier");
    cmd_cla->add_option("--trajectories", cla.trajectories)->required();
    cmd_cla->add_option("--out", cla.out)->required();
    cmd_cla->add_option("--calibration", cla.calibration, "reuse an existing calib.json");
    add_log_flag(cmd_cla, cla.log_level);

    SampleArgs sam;
    auto* cmd_sam = app.add_subcommand("sample", "Monte Carlo ignition-probability campaign");
    cmd_sam->add_option("--model", sam.model, "trained dynamics model dir")->required();
    cmd_sam->add_option("--rbf", sam.rbf)->required();
    cmd_sam->add_option("--calibration", sam.calibration)->required();
    cmd_sam->add_option("--n", sam.n)->capture_default_str();
    cmd_sam->add_option("--seed", sam.seed)->capture_default_str();
    cmd_sam->add_option("--threads", sam.threads)->capture_default_str();
    cmd_sam->add_option("--bins", sam.bins)->capture_default_str();
    cmd_sam->add_flag("--pgm", sam.pgm, "also write PGM rasters of p_hat");
    cmd_sam->add_option("--pairs", sam.pairs, "axis pairs, e.g. 2:5")->capture_default_str();
    cmd_sam->add_option("--out", sam.out)->required();
    add_log_flag(cmd_sam, sam.log_level);

    ReportArgs rep;
    auto* cmd_rep = app.add_subcommand("report", "metrics bundle from pipeline outputs");
    cmd_rep->add_option("--out", rep.out)->required();
    cmd_rep->add_option("--trajectories", rep.trajectories);
    cmd_rep->add_option("--node", rep.node, "dynamics model dir for quarter errors");
    cmd_rep->add_option("--calibration", rep.calibration, "calib.json for confusion");
    cmd_rep->add_option("--records", rep.records, "campaign records.csv");
    cmd_rep->add_option("--upsample", rep.upsample)->capture_default_str();
    add_log_flag(cmd_rep, rep.log_level);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) return run_gen_data(gen);
        if (cmd_tae->parsed()) return run_train_ae(tae);
        if (cmd_enc->parsed()) return run_encode(enc);
        if (cmd_tno->parsed()) return run_train_node(tno);
        if (cmd_pre->parsed()) return run_predict(pre);
        if (cmd_cla->parsed()) return run_classify(cla);
        if (cmd_sam->parsed()) return run_sample(sam);
        if (cmd_rep->parsed()) return run_report(rep);
    } catch (const std::exception& e) {
        std::cerr << "dnae: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
