#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dnae/classifier.hpp"
#include "dnae/errors.hpp"
#include "dnae/metrics.hpp"
#include "dnae/rng.hpp"
#include "dnae/synth.hpp"

using namespace dnae;
namespace fs = std::filesystem;

namespace {

IsothermSeries series_of(std::vector<double> areas) {
    IsothermSeries s;
    s.areas = std::move(areas);
    for (std::size_t i = 0; i < s.areas.size(); ++i) s.times_us.push_back(10.0 * i);
    return s;
}

/// Trajectory with a prescribed final-quarter band per component. `q4` holds
/// latent_dim values written into the last quarter; earlier points carry a
/// fixed preamble so the tail is what decides.
Trajectory banded_traj(const std::vector<double>& q4_lo, const std::vector<double>& q4_hi,
                       int outcome, int n_points = 8) {
    const int L = static_cast<int>(q4_lo.size());
    Trajectory tr;
    tr.outcome = outcome;
    tr.times_us.resize(static_cast<std::size_t>(n_points));
    for (int t = 0; t < n_points; ++t) tr.times_us[static_cast<std::size_t>(t)] = t;
    tr.states.assign(static_cast<std::size_t>(n_points * L), 0.0);
    const int start = 3 * (n_points / 4);
    for (int t = start; t < n_points; ++t)
        for (int k = 0; k < L; ++k)
            tr.state(t)[k] = (t % 2 == 0) ? q4_lo[static_cast<std::size_t>(k)]
                                          : q4_hi[static_cast<std::size_t>(k)];
    return tr;
}

} // namespace

TEST_SUITE("classifier") {

TEST_CASE("superlevel area of a gaussian blob matches the analytic disc") {
    SynthConfig cfg;
    cfg.grid_h = 96;
    cfg.grid_w = 96;
    cfg.pixel_mm = 0.125;
    KernelState k;
    k.cx_mm = 0.0;
    k.cy_mm = 0.0;
    k.radius_mm = 1.0;
    const double amp = 5.0;                                  // peak above background
    k.intensity = amp / (std::sqrt(2.0 * 3.14159265358979323846) * k.radius_mm);
    auto f = render_ir(k, cfg);

    const double pixel_area = cfg.pixel_mm * cfg.pixel_mm;
    const double thr = 0.5;
    const double bg_centre = 0.02 + 0.05 * 0.5;              // background at mid-height
    const double disc = 3.14159265358979323846 * 2.0 * k.radius_mm * k.radius_mm *
                        std::log(amp / (thr - bg_centre));
    const double got = isotherm_area(f, thr, pixel_area);
    CHECK(std::fabs(got - disc) / disc < 0.10);

    // a threshold below the global minimum counts every pixel
    CHECK(isotherm_area(f, 0.0, pixel_area) ==
          doctest::Approx(96.0 * 96.0 * pixel_area).epsilon(1e-12));

    // superlevel area is non-increasing in the threshold
    double prev = isotherm_area(f, 0.1, pixel_area);
    for (double t : {0.3, 0.5, 1.0, 2.0, 6.0}) {
        const double a = isotherm_area(f, t, pixel_area);
        CHECK(a <= prev);
        prev = a;
    }
    CHECK(isotherm_area(f, 2.0 * amp, pixel_area) == 0.0);
}

TEST_CASE("isotherm series aligns frames with times") {
    SynthConfig cfg;
    cfg.grid_h = 16;
    cfg.grid_w = 8;
    cfg.pixel_mm = 0.5;
    KernelState k;
    k.radius_mm = 0.8;
    k.intensity = 1.0;
    std::vector<Field> frames{render_ir(k, cfg), render_ir(k, cfg)};
    std::vector<double> times{0.0, 10.0};
    auto s = isotherm_series(frames, times, 0.2, 0.25);
    CHECK(s.areas.size() == 2);
    CHECK(s.areas[0] == s.areas[1]);
    CHECK(s.times_us == times);
    CHECK(s.threshold == 0.2);
    CHECK_THROWS_AS(isotherm_series(frames, {0.0}, 0.2), ValueError);
}

TEST_CASE("area growth test takes exactly the trailing window") {
    CHECK(classify_by_area(series_of({1, 2, 3, 4, 5, 6}), 5));
    // 4 of 5 strictly positive increments sits exactly on the 80% line
    CHECK(classify_by_area(series_of({1, 2, 3, 4, 5, 4}), 5));
    CHECK_FALSE(classify_by_area(series_of({1, 2, 3, 2, 5, 4}), 5));
    // early history is ignored: a collapsing prefix cannot veto late growth
    CHECK(classify_by_area(series_of({9, 7, 5, 1, 2, 3, 4, 5, 6}), 5));
    // flat segments are not growth
    CHECK_FALSE(classify_by_area(series_of({1, 1, 1, 1, 1, 1}), 5));
    // scale invariance
    auto s = series_of({2, 3, 5, 4, 6, 7});
    auto scaled = s;
    for (auto& a : scaled.areas) a *= 37.5;
    CHECK(classify_by_area(s, 5) == classify_by_area(scaled, 5));

    CHECK_THROWS_AS(classify_by_area(series_of({1, 2, 3}), 5), ValueError);
    CHECK_THROWS_AS(classify_by_area(series_of({1, 2, 3}), 0), ValueError);
}

TEST_CASE("latent branch rule looks at the final-quarter minimum") {
    // 8 points, quarter starts at index 6; dip at index 6 decides
    auto tr = banded_traj({-0.6, 0.3}, {-0.1, 0.4}, 1);
    CHECK(classify_by_latent(tr, 0, -0.5));
    CHECK_FALSE(classify_by_latent(tr, 0, -0.7));
    CHECK(classify_by_latent(tr, 1, 0.35));

    // dips before the final quarter are invisible
    auto early = banded_traj({0.5, 0.5}, {0.5, 0.5}, 1);
    early.state(1)[0] = -5.0;
    CHECK_FALSE(classify_by_latent(early, 0, 0.0));

    CHECK_THROWS_AS(classify_by_latent(tr, 5, 0.0), ValueError);
    CHECK_THROWS_AS(classify_by_latent(tr, 0, std::nan("")), StateError);
    auto stub = banded_traj({0.0}, {0.0}, 1, 3);
    CHECK_THROWS_AS(classify_by_latent(stub, 0, 0.0), ValueError);
}

TEST_CASE("branch classifier object enforces calibration and round-trips") {
    BranchClassifier raw;
    auto tr = banded_traj({-0.6, 0.3}, {-0.1, 0.4}, 1);
    CHECK_THROWS_AS(raw.classify(tr), StateError);
    auto tmp = fs::temp_directory_path() / "dnae_branch.json";
    CHECK_THROWS_AS(raw.save(tmp), StateError);

    BranchClassifier c;
    c.component = 1;
    c.threshold = 0.37;
    c.sign = -1;
    c.calibrated = true;
    // sign -1: success iff the final-quarter maximum exceeds the threshold
    CHECK(c.classify(tr));            // max of comp 1 over Q4 is 0.4
    c.threshold = 0.45;
    CHECK_FALSE(c.classify(tr));

    c.save(tmp);
    auto back = BranchClassifier::load(tmp);
    CHECK(back.component == 1);
    CHECK(back.threshold == 0.45);
    CHECK(back.sign == -1);
    CHECK(back.calibrated);
    CHECK(back.classify(tr) == c.classify(tr));
    fs::remove(tmp);

    auto junk = fs::temp_directory_path() / "dnae_branch_junk.json";
    {
        std::ofstream out(junk);
        out << "{\"format\": \"something-else\"}\n";
    }
    CHECK_THROWS_AS(BranchClassifier::load(junk), IoError);
    fs::remove(junk);
}

TEST_CASE("calibration finds the separating component exactly") {
    Rng rng(55);
    std::vector<Trajectory> train;
    for (int i = 0; i < 24; ++i) {
        const int outcome = i % 2;
        // components 0 and 1: overlapping noise; component 2 separates on its
        // final-quarter minimum (success dips low)
        const double dip = outcome == 1 ? rng.uniform(-0.9, -0.7) : rng.uniform(-0.2, 0.2);
        std::vector<double> lo{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), dip};
        std::vector<double> hi{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), dip + 0.1};
        train.push_back(banded_traj(lo, hi, outcome));
    }
    auto c = calibrate_branch(train);
    CHECK(c.calibrated);
    CHECK(c.component == 2);
    CHECK(c.sign == +1);
    std::vector<int> pred, actual;
    for (const auto& tr : train) {
        pred.push_back(c.classify(tr) ? 1 : 0);
        actual.push_back(tr.outcome);
    }
    CHECK(confusion(pred, actual).accuracy() == 1.0);
}

TEST_CASE("calibration tie-breaks prefer low components and the dip direction") {
    // successes span [-1, +1] in Q4, failures sit at 0: both directions and
    // both duplicated components separate perfectly
    std::vector<Trajectory> train;
    for (int i = 0; i < 10; ++i) {
        const int outcome = i % 2;
        const double lo = outcome == 1 ? -1.0 : 0.0;
        const double hi = outcome == 1 ? 1.0 : 0.0;
        train.push_back(banded_traj({lo, lo}, {hi, hi}, outcome));
    }
    auto c = calibrate_branch(train);
    CHECK(c.component == 0);
    CHECK(c.sign == +1);
    for (const auto& tr : train) CHECK(static_cast<int>(c.classify(tr)) == tr.outcome);
}

TEST_CASE("calibration rejects unusable training sets") {
    CHECK_THROWS_AS(calibrate_branch({}), ValueError);

    std::vector<Trajectory> one_class;
    for (int i = 0; i < 4; ++i) one_class.push_back(banded_traj({-0.5}, {0.5}, 1));
    CHECK_THROWS_AS(calibrate_branch(one_class), ValueError);

    auto unlabeled = one_class;
    unlabeled[0].outcome = -1;
    CHECK_THROWS_AS(calibrate_branch(unlabeled), ValueError);

    auto mixed = one_class;
    mixed[1].outcome = 0;
    mixed[2] = banded_traj({-0.5, 0.1}, {0.5, 0.2}, 0);   // latent dim 2 vs 1
    CHECK_THROWS_AS(calibrate_branch(mixed), ValueError);
}

} // TEST_SUITE
