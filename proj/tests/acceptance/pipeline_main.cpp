// End-to-end acceptance gate: synthetic dataset -> autoencoder -> latent
// curriculum training -> branch classifier -> Monte-Carlo campaign, plus the
// determinism rerun. Prints one [PASS]/[FAIL] line per criterion; exit code =
// number of failures. Expect a long runtime: this trains the full stack twice.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dnae/autoencoder.hpp"
#include "dnae/classifier.hpp"
#include "dnae/curriculum.hpp"
#include "dnae/dataset.hpp"
#include "dnae/errors.hpp"
#include "dnae/metrics.hpp"
#include "dnae/node.hpp"
#include "dnae/param_space.hpp"
#include "dnae/sampler.hpp"
#include "dnae/synth.hpp"
#include "support/oracles.hpp"

using namespace dnae;
namespace fs = std::filesystem;

namespace {

// ---- pinned pipeline configuration ----
constexpr double kAeTargetValMse = 5e-3;
constexpr int kAeMaxEpochs = 60;
constexpr int kAeBatch = 16;
constexpr int kAeStepsPerEpoch = 0;   // full pass
constexpr double kValFraction = 0.1;
constexpr int kUpsampleFactor = 10;
constexpr int kFolds = 50;
constexpr double kAdvanceEpsilon = 1e-4;
constexpr double kLambda = 1e-2;
constexpr long kNodeBudget = 20000;
constexpr int kNodeWidth = 32;        // hidden width sized for the CPU budget
constexpr long kCheckpointEvery = 5000;

// ---- pinned gates ----
constexpr double kTrainAccGate = 0.95;
constexpr double kValAccGate = 0.80;
constexpr double kPipelineBudgetSec = 7200.0;
constexpr double kBumpFractionGate = 0.80;
constexpr long kCampaignSamples = 100000;
constexpr unsigned long long kCampaignSeed = 7;
constexpr int kMapBins = 25;
constexpr double kCampaignBudgetSec = 600.0;
constexpr double kContourCellTol = 2.0;

int g_failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void note(const std::string& msg) {
    std::fprintf(stderr, "[pipeline] %s\n", msg.c_str());
    std::fflush(stderr);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct TrainingRun {
    NodeMlp model;
    TrainNodeResult result;
    CurriculumState curriculum;
};

TrainingRun run_training(const TrajectorySet& data, const NodeConfig& node_cfg,
                         const AdamConfig& adam_cfg, const fs::path& ckpt_dir,
                         const fs::path& log_csv) {
    TrainingRun run{NodeMlp(node_cfg), {}, {}};
    run.curriculum.n_folds = kFolds;
    run.curriculum.epsilon = kAdvanceEpsilon;
    run.curriculum.upsample_factor = kUpsampleFactor;
    TrainNodeOptions opt;
    opt.threads = 1;
    opt.log_csv = log_csv;
    opt.checkpoint_dir = ckpt_dir;
    opt.checkpoint_every = kCheckpointEvery;
    run.result = train_node(data, run.model, adam_cfg, run.curriculum, opt);
    return run;
}

/// Vertices of one contour level parsed back from a contours CSV.
std::vector<std::array<double, 2>> contour_vertices(const fs::path& file, double level) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::vector<std::array<double, 2>> pts;
    std::string line;
    std::getline(in, line);   // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw IoError("bad contour row: " + line);
        if (std::fabs(std::stod(cells[0]) - level) > 1e-12) continue;
        pts.push_back({std::stod(cells[4]), std::stod(cells[5])});
    }
    return pts;
}

} // namespace

int main() {
    const auto t_start = std::chrono::steady_clock::now();
    const fs::path scratch = fs::current_path() / "acceptance_scratch";
    std::error_code ec;
    fs::remove_all(scratch, ec);
    fs::create_directories(scratch);

    bool reported6 = false, reported7 = false, reported8 = false, reported10 = false;
    try {
        // ---------- criterion 6: full pipeline ----------
        SynthConfig synth_cfg;   // 300 trials x 20 snapshots at 96x48
        note("building dataset (" + std::to_string(synth_cfg.n_trials) + " trials)");
        Dataset data = build_dataset(synth_cfg, scratch / "dataset");

        AeConfig ae_cfg;
        Autoencoder ae(ae_cfg);
        AdamConfig ae_adam;
        TrainAeOptions ae_opt;
        ae_opt.max_epochs = kAeMaxEpochs;
        ae_opt.batch_size = kAeBatch;
        ae_opt.val_fraction = kValFraction;
        ae_opt.target_val_mse = kAeTargetValMse;
        ae_opt.steps_per_epoch = kAeStepsPerEpoch;
        note("training autoencoder (target val mse " + fmt(kAeTargetValMse) + ")");
        TrainAeResult ae_res = train_ae(ae, data, ae_adam, ae_opt);
        ae.save(scratch / "ae");
        note("autoencoder val mse " + fmt(ae_res.final_val_mse) + " after " +
             std::to_string(ae_res.history.size()) + " epochs");

        TrajectorySet encoded = encode_dataset(ae, data, kValFraction);
        TrajectorySet upsampled = upsample_trajectories(encoded, kUpsampleFactor, kFolds);

        NodeConfig node_cfg;
        node_cfg.latent_dim = ae_cfg.latent_dim;
        node_cfg.hidden_width = kNodeWidth;
        node_cfg.lambda = kLambda;
        const AdamConfig node_adam = AdamConfig::scaled_to(kNodeBudget);

        note("curriculum training (" + std::to_string(kFolds) + " folds, budget " +
             std::to_string(kNodeBudget) + " iterations)");
        TrainingRun run_a = run_training(upsampled, node_cfg, node_adam, scratch / "ckpt_a",
                                         scratch / "train_a.csv");
        run_a.model.save(scratch / "model_a");
        note("curriculum done: " + std::to_string(run_a.result.iterations) + " iterations, " +
             std::to_string(run_a.curriculum.active_folds) + "/" + std::to_string(kFolds) +
             " folds, final loss " + fmt(run_a.result.final_loss));

        // advance events must walk the fold count up one at a time
        bool monotone = run_a.result.reached_full_horizon;
        {
            int expect = 2;
            long last_iter = 0;
            for (const auto& [iter, active] : run_a.curriculum.event_log) {
                if (active != expect++ || iter < last_iter) monotone = false;
                last_iter = iter;
            }
            if (static_cast<int>(run_a.curriculum.event_log.size()) != kFolds - 1)
                monotone = false;
        }

        std::vector<Trajectory> train_truth, val_truth;
        for (const auto& tr : upsampled.items)
            (tr.split == "val" ? val_truth : train_truth).push_back(tr);
        BranchClassifier clf = calibrate_branch(train_truth);
        clf.save(scratch / "classifier.json");

        const int latent = upsampled.latent_dim;
        long diverged = 0;
        auto rollout = [&](const Trajectory& truth, bool& ok) {
            std::vector<double> v0(truth.state(0), truth.state(0) + latent);
            try {
                Trajectory pred = integrate(run_a.model, v0, truth.xi, truth.times_us);
                ok = true;
                return pred;
            } catch (const DivergenceError&) {
                ok = false;
                ++diverged;
                return Trajectory{};
            }
        };
        auto accuracy_on = [&](const std::vector<Trajectory>& set) {
            long correct = 0;
            for (const auto& tr : set) {
                bool ok = false;
                Trajectory pred = rollout(tr, ok);
                if (ok && clf.classify(pred) == (tr.outcome == 1)) ++correct;
            }
            return static_cast<double>(correct) / static_cast<double>(set.size());
        };
        const double train_acc = accuracy_on(train_truth);
        const double val_acc = accuracy_on(val_truth);

        // error growth along the horizon: last temporal quarter vs first
        std::vector<double> q1_l2, q4_l2, q1_fr, q4_fr;
        for (const auto& tr : val_truth) {
            bool ok = false;
            Trajectory pred = rollout(tr, ok);
            if (!ok) continue;
            QuarterErrors qe = quarter_errors(pred, tr);
            q1_l2.push_back(qe.l2[0]);
            q4_l2.push_back(qe.l2[3]);
            q1_fr.push_back(qe.frechet[0]);
            q4_fr.push_back(qe.frechet[3]);
        }
        const bool quarters_ok = !q1_l2.empty() &&
                                 oracle::median(q4_l2) > oracle::median(q1_l2) &&
                                 oracle::median(q4_fr) > oracle::median(q1_fr);

        const double pipeline_sec = seconds_since(t_start);
        const bool pass6 = ae_res.reached_target && ae_res.final_val_mse < kAeTargetValMse &&
                           monotone && train_acc >= kTrainAccGate && val_acc >= kValAccGate &&
                           quarters_ok && pipeline_sec <= kPipelineBudgetSec;
        report(6, pass6,
               "val mse " + fmt(ae_res.final_val_mse) + " (target " + fmt(kAeTargetValMse) +
                   "), folds " + std::to_string(run_a.curriculum.active_folds) + "/" +
                   std::to_string(kFolds) + (monotone ? " monotone" : " NOT monotone") +
                   ", train acc " + fmt(train_acc) + " (>= " + fmt(kTrainAccGate) +
                   "), val acc " + fmt(val_acc) + " (>= " + fmt(kValAccGate) + "), median Q4/Q1 " +
                   (quarters_ok ? "grows" : "does NOT grow") + " (l2 " +
                   (q4_l2.empty() ? std::string("n/a")
                                  : fmt(oracle::median(q4_l2)) + " vs " + fmt(oracle::median(q1_l2))) +
                   "), " + std::to_string(diverged) + " divergent rollouts, " + fmt(pipeline_sec) +
                   " s (budget " + fmt(kPipelineBudgetSec) + ")");
        reported6 = true;

        // ---------- criterion 7: advance events bump then recover ----------
        const auto& hist = run_a.result.loss_history;
        long assessable = 0, with_signature = 0;
        for (std::size_t k = 0; k < run_a.curriculum.event_log.size(); ++k) {
            const long e = run_a.curriculum.event_log[k].first;   // 1-based iteration
            if (e < 1 || static_cast<std::size_t>(e) >= hist.size()) continue;   // no later loss
            ++assessable;
            const double pre = hist[static_cast<std::size_t>(e - 1)];
            const bool bump = hist[static_cast<std::size_t>(e)] > pre;
            const std::size_t end_idx = k + 1 < run_a.curriculum.event_log.size()
                                            ? static_cast<std::size_t>(
                                                  run_a.curriculum.event_log[k + 1].first - 1)
                                            : hist.size() - 1;
            bool recovered = false;
            for (std::size_t t = static_cast<std::size_t>(e); t <= end_idx && t < hist.size(); ++t)
                if (hist[t] < kAdvanceEpsilon) { recovered = true; break; }
            if (bump && recovered) ++with_signature;
        }
        const double frac = assessable > 0 ? static_cast<double>(with_signature) /
                                                 static_cast<double>(assessable)
                                           : 0.0;
        report(7, assessable > 0 && frac >= kBumpFractionGate,
               std::to_string(with_signature) + "/" + std::to_string(assessable) +
                   " advance events show a loss bump followed by recovery (" + fmt(frac) +
                   " >= " + fmt(kBumpFractionGate) + ")");
        reported7 = true;

        // ---------- criterion 8: Monte-Carlo campaign vs analytic switch ----------
        std::vector<ParamVector> rbf_xis;
        std::vector<std::vector<double>> rbf_v0;
        for (const auto& tr : train_truth) {
            rbf_xis.push_back(tr.xi);
            rbf_v0.emplace_back(tr.state(0), tr.state(0) + latent);
        }
        RbfModel rbf = RbfModel::fit(rbf_xis, rbf_v0);
        rbf.save(scratch / "rbf.json");

        CampaignConfig camp_cfg;
        camp_cfg.n_samples = kCampaignSamples;
        camp_cfg.seed = kCampaignSeed;
        camp_cfg.threads = 1;
        camp_cfg.map_bins = kMapBins;
        camp_cfg.write_pgm = true;
        note("running campaign (" + std::to_string(kCampaignSamples) + " samples)");
        const auto t_camp = std::chrono::steady_clock::now();
        CampaignSummary summary = run_campaign(run_a.model, rbf, clf, camp_cfg,
                                               scratch / "campaign_a");
        const double camp_sec = seconds_since(t_camp);
        note("campaign done in " + fmt(camp_sec) + " s, success fraction " +
             fmt(summary.success_fraction()));

        // analytic success fraction over the ensemble-clipped prior: the
        // switch is linear in the standardized dominant components, all of
        // which are uniform, so the accepted-sample success probability is a
        // halfspace volume fraction of a 4-d box.
        const EnsembleBounds& eb = rbf.bounds();
        auto slo = [&](int c) { return standardize_component(c, eb.lo[static_cast<std::size_t>(c)]); };
        auto shi = [&](int c) { return standardize_component(c, eb.hi[static_cast<std::size_t>(c)]); };
        const double g = synth_cfg.switch_gain;
        const double p_true = oracle::halfspace_box_fraction(
            {-g, -g, -g, 0.25 * g}, -synth_cfg.theta0, {slo(2), slo(4), slo(5), slo(6)},
            {shi(2), shi(4), shi(5), shi(6)});
        const long n_valid = summary.n_success + summary.n_failure;
        const auto [w_lo, w_hi] = wilson_interval(summary.n_success, n_valid, 1.96);
        const bool wilson_ok = p_true >= w_lo && p_true <= w_hi;

        // the p = 0.5 contour of the (xi2, xi5) map sits on the line
        // s2 + s5 = theta0/g - E[s4] + 0.25 E[s6] (means over the clipped box)
        const double c_line = synth_cfg.theta0 / g - 0.5 * (slo(4) + shi(4)) +
                              0.25 * 0.5 * (slo(6) + shi(6));
        char snap[64];
        std::snprintf(snap, sizeof snap, "map_xi2_xi5_n%08ld_contours.csv", kCampaignSamples);
        const auto verts = contour_vertices(scratch / "campaign_a" / snap, 0.5);
        const double cell_a = (shi(2) - slo(2)) / kMapBins;
        const double cell_b = (shi(5) - slo(5)) / kMapBins;
        double worst_cells = verts.empty() ? std::numeric_limits<double>::infinity() : 0.0;
        for (const auto& v : verts) {
            const double resid = standardize_component(2, v[0]) + standardize_component(5, v[1]) -
                                 c_line;
            worst_cells = std::max(worst_cells, std::fabs(resid) / std::hypot(cell_a, cell_b));
        }
        const bool contour_ok = !verts.empty() && worst_cells <= kContourCellTol;

        // map convergence: successive snapshot differences shrink
        const auto records = read_records_csv(scratch / "campaign_a" / "records.csv");
        auto prefix_map = [&](std::size_t n, int a, int b) {
            std::vector<CampaignRecord> sub(records.begin(),
                                            records.begin() + static_cast<std::ptrdiff_t>(n));
            return probability_map(sub, a, b, kMapBins, kMapBins,
                                   eb.lo[static_cast<std::size_t>(a)],
                                   eb.hi[static_cast<std::size_t>(a)],
                                   eb.lo[static_cast<std::size_t>(b)],
                                   eb.hi[static_cast<std::size_t>(b)]);
        };
        bool mad_ok = records.size() == static_cast<std::size_t>(kCampaignSamples);
        std::string mad_detail;
        for (auto [a, b] : camp_cfg.axis_pairs) {
            const auto quarter = prefix_map(records.size() / 4, a, b);
            const auto half = prefix_map(records.size() / 2, a, b);
            const auto full = prefix_map(records.size(), a, b);
            const double d1 = map_mean_abs_difference(quarter, half);
            const double d2 = map_mean_abs_difference(half, full);
            if (!(d1 > d2)) mad_ok = false;
            if (!mad_detail.empty()) mad_detail += ", ";
            mad_detail += "xi" + std::to_string(a) + "/xi" + std::to_string(b) + " " + fmt(d1) +
                          " -> " + fmt(d2);
        }

        const bool pass8 = camp_sec <= kCampaignBudgetSec && wilson_ok && contour_ok && mad_ok;
        report(8, pass8,
               fmt(camp_sec) + " s (budget " + fmt(kCampaignBudgetSec) + "), analytic fraction " +
                   fmt(p_true) + (wilson_ok ? " inside" : " OUTSIDE") + " Wilson [" + fmt(w_lo) +
                   ", " + fmt(w_hi) + "] of " + std::to_string(summary.n_success) + "/" +
                   std::to_string(n_valid) + " (" + std::to_string(summary.n_invalid) +
                   " invalid), 0.5-contour worst offset " + fmt(worst_cells) + " cells (<= " +
                   fmt(kContourCellTol) + "), map deltas shrink: " + mad_detail);
        reported8 = true;

        // ---------- criterion 10: determinism rerun ----------
        note("rerunning curriculum training for the determinism check");
        TrainingRun run_b = run_training(upsampled, node_cfg, node_adam, scratch / "ckpt_b",
                                         scratch / "train_b.csv");
        run_b.model.save(scratch / "model_b");

        std::string diff;
        bool models_same = oracle::same_tree(scratch / "model_a", scratch / "model_b", &diff);
        bool ckpts_same = true;
        const bool have_a = fs::exists(scratch / "ckpt_a"), have_b = fs::exists(scratch / "ckpt_b");
        if (have_a != have_b) {
            ckpts_same = false;
            diff = "checkpoint directory present in only one run";
        } else if (have_a) {
            ckpts_same = oracle::same_tree(scratch / "ckpt_a", scratch / "ckpt_b", &diff);
        }

        note("rerunning campaign for the determinism check");
        run_campaign(run_a.model, rbf, clf, camp_cfg, scratch / "campaign_b");
        std::string camp_diff;
        const bool campaign_same =
            oracle::same_tree(scratch / "campaign_a", scratch / "campaign_b", &camp_diff);

        std::string detail10 = "model weights " + std::string(models_same ? "identical" : "differ") +
                               ", checkpoints " + std::string(ckpts_same ? "identical" : "differ") +
                               ", campaign artifacts " +
                               std::string(campaign_same ? "identical" : "differ");
        if (!models_same || !ckpts_same) detail10 += " (first diff: " + diff + ")";
        if (!campaign_same) detail10 += " (first diff: " + camp_diff + ")";
        report(10, models_same && ckpts_same && campaign_same, detail10);
        reported10 = true;
    } catch (const std::exception& e) {
        const std::string why = std::string("pipeline aborted: ") + e.what();
        if (!reported6) report(6, false, why);
        if (!reported7) report(7, false, why);
        if (!reported8) report(8, false, why);
        if (!reported10) report(10, false, why);
    }

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
