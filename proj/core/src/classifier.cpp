#include "dnae/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dnae/errors.hpp"
#include "dnae/serialize.hpp"

namespace dnae {

double isotherm_area(const Field& x, double threshold, double pixel_area) {
    long count = 0;
    for (double v : x.values)
        if (v >= threshold) ++count;
    return static_cast<double>(count) * pixel_area;
}

IsothermSeries isotherm_series(const std::vector<Field>& frames,
                               const std::vector<double>& times_us, double threshold,
                               double pixel_area) {
    if (frames.size() != times_us.size())
        throw ValueError("isotherm_series: " + std::to_string(frames.size()) + " frames vs " +
                         std::to_string(times_us.size()) + " times");
    IsothermSeries s;
    s.threshold = threshold;
    s.times_us = times_us;
    s.areas.reserve(frames.size());
    for (const auto& f : frames) s.areas.push_back(isotherm_area(f, threshold, pixel_area));
    return s;
}

bool classify_by_area(const IsothermSeries& series, int window) {
    if (window < 1) throw ValueError("classify_by_area: window must be >= 1");
    const long n = static_cast<long>(series.areas.size());
    if (n < window + 1)
        throw ValueError("isotherm series of " + std::to_string(n) +
                         " frames is too short for window " + std::to_string(window));
    long positive = 0;
    for (long i = n - window; i < n; ++i)
        if (series.areas[static_cast<std::size_t>(i)] >
            series.areas[static_cast<std::size_t>(i - 1)])
            ++positive;
    return 5 * positive >= 4 * static_cast<long>(window);   // >= 80% of increments
}

static int final_quarter_start(int n_points) {
    if (n_points < 4) throw ValueError("trajectory needs at least 4 points for quarter analysis");
    return 3 * (n_points / 4);
}

// extreme excursion of one component over the final quarter
static double branch_feature(const Trajectory& traj, int component, int sign) {
    const int L = traj.latent_dim();
    if (component < 0 || component >= L)
        throw ValueError("component " + std::to_string(component) + " outside latent dim " +
                         std::to_string(L));
    const int n = traj.n_points();
    const int start = final_quarter_start(n);
    double ext = traj.state(start)[component];
    for (int t = start + 1; t < n; ++t) {
        const double v = traj.state(t)[component];
        if (sign > 0 ? v < ext : v > ext) ext = v;
    }
    return ext;
}

bool classify_by_latent(const Trajectory& traj, int component, double branch_threshold) {
    if (!std::isfinite(branch_threshold))
        throw StateError("branch threshold is not calibrated");
    return branch_feature(traj, component, +1) < branch_threshold;
}

bool BranchClassifier::classify(const Trajectory& traj) const {
    if (!calibrated) throw StateError("branch classifier used before calibration");
    if (sign > 0) return branch_feature(traj, component, +1) < threshold;
    return branch_feature(traj, component, -1) > threshold;
}

void BranchClassifier::save(const std::filesystem::path& file) const {
    if (!calibrated) throw StateError("cannot save an uncalibrated branch classifier");
    nlohmann::json j;
    j["format"] = "dnae-branch/1";
    j["component"] = component;
    j["threshold"] = threshold;
    j["sign"] = sign;
    write_text_file(file, j.dump(2) + "\n");
}

BranchClassifier BranchClassifier::load(const std::filesystem::path& file) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(file));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("branch classifier " + file.string() + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "dnae-branch/1")
        throw IoError("branch classifier " + file.string() + ": unrecognized format");
    BranchClassifier c;
    c.component = j.at("component").get<int>();
    c.threshold = j.at("threshold").get<double>();
    c.sign = j.at("sign").get<int>();
    if (c.component < 0 || (c.sign != 1 && c.sign != -1) || !std::isfinite(c.threshold))
        throw IoError("branch classifier " + file.string() + ": invalid field values");
    c.calibrated = true;
    return c;
}

namespace {

// balanced accuracy of "feature < threshold => success" over sorted features
struct Sweep {
    double best_acc = -1.0;
    double best_threshold = 0.0;
};

Sweep sweep_thresholds(std::vector<std::pair<double, int>>& feats, long n_succ, long n_fail,
                       bool below_is_success) {
    std::sort(feats.begin(), feats.end());
    const long n = static_cast<long>(feats.size());
    Sweep out;
    // prefix[k] = successes among the k smallest features
    long succ_below = 0;
    auto consider = [&](long k, double threshold) {
        const long fail_below = k - succ_below;
        double tp, tn;
        if (below_is_success) {
            tp = static_cast<double>(succ_below);
            tn = static_cast<double>(n_fail - fail_below);
        } else {
            tp = static_cast<double>(n_succ - succ_below);
            tn = static_cast<double>(fail_below);
        }
        const double acc = 0.5 * (tp / n_succ + tn / n_fail);
        if (acc > out.best_acc) {
            out.best_acc = acc;
            out.best_threshold = threshold;
        }
    };
    consider(0, feats.front().first - 1.0);
    for (long k = 1; k < n; ++k) {
        succ_below += feats[static_cast<std::size_t>(k - 1)].second;
        const double lo = feats[static_cast<std::size_t>(k - 1)].first;
        const double hi = feats[static_cast<std::size_t>(k)].first;
        if (lo < hi) consider(k, 0.5 * (lo + hi));
    }
    succ_below += feats.back().second;
    consider(n, feats.back().first + 1.0);
    return out;
}

} // namespace

BranchClassifier calibrate_branch(const std::vector<Trajectory>& training) {
    if (training.empty()) throw ValueError("calibrate_branch: empty training set");
    const int L = training[0].latent_dim();
    long n_succ = 0, n_fail = 0;
    for (const auto& tr : training) {
        if (tr.outcome != 0 && tr.outcome != 1)
            throw ValueError("trajectory " + tr.trial_id + " has no recorded outcome");
        if (tr.latent_dim() != L)
            throw ValueError("trajectory " + tr.trial_id + " latent dim mismatch");
        (tr.outcome == 1 ? n_succ : n_fail)++;
    }
    if (n_succ == 0 || n_fail == 0)
        throw ValueError("calibrate_branch: training set contains a single outcome class");

    BranchClassifier best;
    double best_acc = -1.0;
    std::vector<std::pair<double, int>> feats(training.size());
    for (int c = 0; c < L; ++c) {
        for (int sign : {+1, -1}) {
            for (std::size_t i = 0; i < training.size(); ++i)
                feats[i] = {branch_feature(training[i], c, sign), training[i].outcome};
            // sign +1: success class sits below threshold; sign -1: above
            const Sweep s = sweep_thresholds(feats, n_succ, n_fail, sign > 0);
            if (s.best_acc > best_acc) {
                best_acc = s.best_acc;
                best.component = c;
                best.sign = sign;
                best.threshold = s.best_threshold;
            }
        }
    }
    best.calibrated = true;
    return best;
}

} // namespace dnae
