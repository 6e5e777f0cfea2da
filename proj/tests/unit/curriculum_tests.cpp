#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "dnae/curriculum.hpp"
#include "dnae/rng.hpp"
#include "support/oracles.hpp"

using namespace dnae;
namespace fs = std::filesystem;

namespace {

ParamVector mid_xi() {
    ParamVector p;
    for (int i = 0; i < kParamCount; ++i) p[i] = param_table()[static_cast<std::size_t>(i)].mid();
    return p;
}

ParamVector jittered_xi(Rng& rng) {
    ParamVector p = mid_xi();
    for (int i = 0; i < kParamCount; ++i)
        p[i] += 0.3 * param_table()[static_cast<std::size_t>(i)].half_range() * rng.uniform(-1.0, 1.0);
    return p;
}

TrajectorySet line_set(int n_trials, int n_points, int latent, double slope_scale,
                       std::uint64_t seed) {
    TrajectorySet set;
    set.latent_dim = latent;
    Rng rng(seed);
    for (int i = 0; i < n_trials; ++i) {
        Trajectory tr;
        tr.trial_id = "case_" + std::to_string(i);
        tr.xi = jittered_xi(rng);
        tr.split = "train";
        tr.outcome = i % 2;
        for (int j = 0; j < n_points; ++j) tr.times_us.push_back(10.0 * j);
        for (int j = 0; j < n_points; ++j)
            for (int k = 0; k < latent; ++k) {
                const double v0 = 0.1 * k - 0.2;
                const double slope = slope_scale * (k + 1) * (i % 3 - 1);
                tr.states.push_back(v0 + slope * tr.times_us[static_cast<std::size_t>(j)]);
            }
        set.items.push_back(std::move(tr));
    }
    return set;
}

} // namespace

TEST_SUITE("curriculum") {

TEST_CASE("upsampling by factor one is the identity") {
    auto raw = line_set(2, 10, 3, 1e-3, 60);
    auto up = upsample_trajectories(raw, 1, 5);
    REQUIRE(up.items.size() == raw.items.size());
    for (std::size_t i = 0; i < raw.items.size(); ++i) {
        CHECK(up.items[i].times_us == raw.items[i].times_us);
        for (std::size_t e = 0; e < raw.items[i].states.size(); ++e)
            CHECK(up.items[i].states[e] == doctest::Approx(raw.items[i].states[e]).epsilon(1e-12));
        CHECK(up.items[i].trial_id == raw.items[i].trial_id);
        CHECK(up.items[i].split == raw.items[i].split);
        CHECK(up.items[i].outcome == raw.items[i].outcome);
    }
}

TEST_CASE("upsampling reproduces piecewise-linear data exactly") {
    auto raw = line_set(3, 20, 2, 2e-3, 61);
    auto up = upsample_trajectories(raw, 10, 50);
    REQUIRE(up.items[0].n_points() == 200);
    CHECK(up.items[0].times_us.front() == raw.items[0].times_us.front());
    CHECK(up.items[0].times_us.back() == doctest::Approx(raw.items[0].times_us.back()).epsilon(1e-12));
    // the originals are globally linear, so resampling must be exact
    for (const auto& tr : up.items)
        for (int j = 0; j < tr.n_points(); ++j)
            for (int k = 0; k < 2; ++k) {
                const double v0 = 0.1 * k - 0.2;
                const double t = tr.times_us[static_cast<std::size_t>(j)];
                // slope pattern from line_set
                const double slope =
                    2e-3 * (k + 1) * (std::stoi(tr.trial_id.substr(5)) % 3 - 1);
                CHECK(tr.state(j)[k] == doctest::Approx(v0 + slope * t).epsilon(1e-10));
            }

    // uniform spacing
    const auto& t = up.items[0].times_us;
    const double dt = t[1] - t[0];
    for (std::size_t j = 1; j + 1 < t.size(); ++j)
        CHECK(t[j + 1] - t[j] == doctest::Approx(dt).epsilon(1e-9));
}

TEST_CASE("upsampled length must divide into the folds") {
    auto raw = line_set(1, 10, 2, 1e-3, 62);
    CHECK_THROWS_AS(upsample_trajectories(raw, 3, 7), ValueError);
    CHECK_NOTHROW(upsample_trajectories(raw, 3, 5));
}

TEST_CASE("stage loss over all folds equals the full trajectory loss") {
    auto raw = line_set(3, 12, 3, 1.5e-3, 63);
    auto up = upsample_trajectories(raw, 5, 6);
    std::vector<Trajectory> pred, truth;
    Rng rng(64);
    for (const auto& tr : up.items) {
        truth.push_back(tr);
        auto p = tr;
        for (auto& v : p.states) v += 0.05 * rng.uniform(-1.0, 1.0);
        pred.push_back(std::move(p));
    }
    const double full = node_loss(pred, truth, 0.01);
    CHECK(stage_loss(pred, truth, 6, 6, 0.01) == doctest::Approx(full).epsilon(1e-13));

    // a prefix window matches the scalar reference on the truncated grid
    const int active = 2;
    const int window = up.items[0].n_points() / 6 * active;
    std::vector<std::vector<double>> pref, tref;
    std::vector<double> wtimes(truth[0].times_us.begin(), truth[0].times_us.begin() + window);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pref.emplace_back(pred[i].states.begin(), pred[i].states.begin() + window * 3);
        tref.emplace_back(truth[i].states.begin(), truth[i].states.begin() + window * 3);
    }
    const double want = oracle::scalar_traj_loss(pref, tref, wtimes, 3, 0.01);
    CHECK(stage_loss(pred, truth, active, 6, 0.01) == doctest::Approx(want).epsilon(1e-13));

    CHECK_THROWS_AS(stage_loss(pred, truth, 0, 6, 0.01), ValueError);
    CHECK_THROWS_AS(stage_loss(pred, truth, 7, 6, 0.01), ValueError);
}

TEST_CASE("a flow that already fits advances one fold per iteration") {
    // constant trajectories and a zero-initialised flow: stage loss is 0 at
    // every window, so the curriculum walks straight to the full horizon
    auto raw = line_set(4, 10, 2, 0.0, 65);
    auto up = upsample_trajectories(raw, 2, 5);

    NodeConfig ncfg;
    ncfg.latent_dim = 2;
    ncfg.hidden_width = 6;
    ncfg.t0_us = up.items[0].times_us.front();
    ncfg.t_end_us = up.items[0].times_us.back();
    ncfg.dt_us = up.items[0].times_us[1] - up.items[0].times_us[0];
    ncfg.seed = 66;
    NodeMlp model(ncfg);

    AdamConfig adam = AdamConfig::scaled_to(100);
    CurriculumState cur;
    cur.n_folds = 5;
    cur.epsilon = 1e-4;
    cur.upsample_factor = 2;

    auto result = train_node(up, model, adam, cur);
    CHECK(result.reached_full_horizon);
    CHECK(result.converged);
    CHECK(result.final_loss < cur.epsilon);
    CHECK(result.iterations == 5);
    REQUIRE(cur.event_log.size() == 4);
    for (std::size_t e = 0; e < cur.event_log.size(); ++e) {
        CHECK(cur.event_log[e].first == static_cast<long>(e + 1));
        CHECK(cur.event_log[e].second == static_cast<int>(e + 2));
    }
    CHECK(result.loss_history.size() == static_cast<std::size_t>(result.iterations));
}

TEST_CASE("curriculum learns a gentle linear flow end to end") {
    auto raw = line_set(6, 10, 2, 8e-4, 67);
    auto up = upsample_trajectories(raw, 2, 4);

    NodeConfig ncfg;
    ncfg.latent_dim = 2;
    ncfg.hidden_width = 10;
    ncfg.t0_us = up.items[0].times_us.front();
    ncfg.t_end_us = up.items[0].times_us.back();
    ncfg.dt_us = up.items[0].times_us[1] - up.items[0].times_us[0];
    ncfg.seed = 68;
    NodeMlp model(ncfg);

    AdamConfig adam = AdamConfig::scaled_to(4000);
    adam.lr0 = 3e-3;
    CurriculumState cur;
    cur.n_folds = 4;
    cur.epsilon = 2e-4;
    cur.upsample_factor = 2;

    auto work = fs::temp_directory_path() / "dnae_unit" / "curriculum_run";
    fs::remove_all(work);
    fs::create_directories(work);
    TrainNodeOptions opt;
    opt.log_csv = work / "log.csv";
    opt.checkpoint_dir = work / "ckpt";
    opt.checkpoint_every = 500;

    auto result = train_node(up, model, adam, cur, opt);
    CHECK(result.reached_full_horizon);
    CHECK(result.final_loss < 5e-3);

    // events are monotone single-fold advances
    int prev = 1;
    long prev_iter = 0;
    for (const auto& [iter, folds] : cur.event_log) {
        CHECK(folds == prev + 1);
        CHECK(iter > prev_iter);
        prev = folds;
        prev_iter = iter;
    }
    CHECK(prev == 4);

    // training log has the expected shape
    std::ifstream log(opt.log_csv);
    REQUIRE(log.good());
    std::string header;
    std::getline(log, header);
    CHECK(header == "iteration,stage_loss,active_folds,lr,wall_ms");
    long rows = 0;
    for (std::string line; std::getline(log, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == result.iterations);

    if (result.iterations >= 500) CHECK(fs::exists(opt.checkpoint_dir / "iter_500"));
}

TEST_CASE("validation-tagged trajectories are excluded from training") {
    auto raw = line_set(4, 10, 2, 0.0, 69);
    // poison one trajectory with a steep ramp (a zero flow cannot fit it) and
    // tag it val: training must still converge instantly on the others
    raw.items[3].split = "val";
    for (int j = 0; j < raw.items[3].n_points(); ++j)
        for (int k = 0; k < 2; ++k) raw.items[3].state(j)[k] += 5.0 * j;
    auto up = upsample_trajectories(raw, 2, 5);

    NodeConfig ncfg;
    ncfg.latent_dim = 2;
    ncfg.hidden_width = 6;
    ncfg.t0_us = up.items[0].times_us.front();
    ncfg.t_end_us = up.items[0].times_us.back();
    ncfg.dt_us = up.items[0].times_us[1] - up.items[0].times_us[0];
    NodeMlp model(ncfg);
    AdamConfig adam = AdamConfig::scaled_to(50);
    CurriculumState cur;
    cur.n_folds = 5;
    auto result = train_node(up, model, adam, cur);
    CHECK(result.converged);
    CHECK(result.final_loss < 1e-4);
}

TEST_CASE("diverging training reports the failing iteration") {
    auto raw = line_set(4, 10, 2, 5e-3, 70);
    auto up = upsample_trajectories(raw, 2, 5);

    NodeConfig ncfg;
    ncfg.latent_dim = 2;
    ncfg.hidden_width = 6;
    ncfg.t0_us = up.items[0].times_us.front();
    ncfg.t_end_us = up.items[0].times_us.back();
    ncfg.dt_us = up.items[0].times_us[1] - up.items[0].times_us[0];
    NodeMlp model(ncfg);

    AdamConfig adam = AdamConfig::scaled_to(100);
    adam.lr0 = 1e200;   // guaranteed blow-up
    CurriculumState cur;
    cur.n_folds = 5;
    try {
        train_node(up, model, adam, cur);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.step_index >= 1);
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("a hopeless tolerance never advances and runs out the budget") {
    auto raw = line_set(3, 10, 2, 5e-3, 71);
    auto up = upsample_trajectories(raw, 2, 5);
    NodeConfig ncfg;
    ncfg.latent_dim = 2;
    ncfg.hidden_width = 6;
    ncfg.t0_us = up.items[0].times_us.front();
    ncfg.t_end_us = up.items[0].times_us.back();
    ncfg.dt_us = up.items[0].times_us[1] - up.items[0].times_us[0];
    NodeMlp model(ncfg);
    AdamConfig adam = AdamConfig::scaled_to(30);
    CurriculumState cur;
    cur.n_folds = 5;
    cur.epsilon = 0.0;   // unreachable
    auto result = train_node(up, model, adam, cur);
    CHECK(result.iterations == 30);
    CHECK_FALSE(result.reached_full_horizon);
    CHECK_FALSE(result.converged);
    CHECK(cur.event_log.empty());
}

} // TEST_SUITE
