#include <doctest.h>

#include <cmath>
#include <vector>

#include "dnae/errors.hpp"
#include "dnae/metrics.hpp"
#include "dnae/rng.hpp"
#include "support/oracles.hpp"

using namespace dnae;

namespace {

std::vector<double> random_polyline(Rng& rng, int max_points, int dim) {
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_points)));
    std::vector<double> p(static_cast<std::size_t>(n * dim));
    for (auto& v : p) v = rng.uniform(-2.0, 2.0);
    return p;
}

Trajectory make_traj(const std::vector<double>& times, const std::vector<double>& states) {
    Trajectory tr;
    tr.times_us = times;
    tr.states = states;
    return tr;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("frechet distance basics") {
    std::vector<double> a = {0.0, 0.0, 1.0, 0.0};
    CHECK(discrete_frechet(a, a, 2) == 0.0);
    std::vector<double> b = {0.0, 1.0, 1.0, 1.0};
    CHECK(discrete_frechet(a, b, 2) == 1.0);
    CHECK_THROWS_AS(discrete_frechet({}, b, 2), ValueError);
    CHECK_THROWS_AS(discrete_frechet({1.0, 2.0, 3.0}, b, 2), ValueError);
}

TEST_CASE("frechet dynamic program equals coupling enumeration") {
    Rng rng(90);
    for (int rep = 0; rep < 30; ++rep) {
        const int dim = 1 + static_cast<int>(rng.below(3));
        auto a = random_polyline(rng, 6, dim);
        auto b = random_polyline(rng, 6, dim);
        const double dp = discrete_frechet(a, b, dim);
        const double brute = oracle::brute_frechet(a, b, dim);
        CHECK(std::fabs(dp - brute) <= 1e-12);
    }
}

TEST_CASE("frechet distance is symmetric and triangle-like") {
    Rng rng(91);
    for (int rep = 0; rep < 20; ++rep) {
        auto a = random_polyline(rng, 5, 2);
        auto b = random_polyline(rng, 5, 2);
        auto c = random_polyline(rng, 5, 2);
        const double ab = discrete_frechet(a, b, 2);
        const double ba = discrete_frechet(b, a, 2);
        CHECK(std::fabs(ab - ba) <= 1e-12);
        const double ac = discrete_frechet(a, c, 2);
        const double cb = discrete_frechet(c, b, 2);
        CHECK(ab <= ac + cb + 1e-12);
    }
}

TEST_CASE("quarter errors on equal inputs vanish") {
    std::vector<double> times;
    std::vector<double> states;
    Rng rng(92);
    for (int j = 0; j < 16; ++j) {
        times.push_back(j);
        for (int k = 0; k < 3; ++k) states.push_back(rng.uniform(-1.0, 1.0));
    }
    auto tr = make_traj(times, states);
    auto qe = quarter_errors(tr, tr);
    for (int q = 0; q < 4; ++q) {
        CHECK(qe.frechet[static_cast<std::size_t>(q)] == 0.0);
        CHECK(qe.l2[static_cast<std::size_t>(q)] == 0.0);
    }
}

TEST_CASE("an offset confined to one quarter shows up only there") {
    const int T = 16, L = 3;
    std::vector<double> times, base;
    Rng rng(93);
    for (int j = 0; j < T; ++j) {
        times.push_back(j);
        for (int k = 0; k < L; ++k) base.push_back(rng.uniform(-1.0, 1.0));
    }
    auto truth = make_traj(times, base);
    auto pred = truth;
    const double c = 0.25;
    for (int j = 8; j < 12; ++j)   // third quarter of 16
        for (int k = 0; k < L; ++k) pred.state(j)[k] += c;

    auto qe = quarter_errors(pred, truth);
    const double want = c * std::sqrt(static_cast<double>(L));
    CHECK(qe.l2[0] == 0.0);
    CHECK(qe.l2[1] == 0.0);
    CHECK(qe.l2[2] == doctest::Approx(want).epsilon(1e-12));
    CHECK(qe.l2[3] == 0.0);
    CHECK(qe.frechet[2] == doctest::Approx(want).epsilon(1e-12));

    // rigid translation of both trajectories changes nothing
    auto pred_shift = pred;
    auto truth_shift = truth;
    for (auto& v : pred_shift.states) v += 5.0;
    for (auto& v : truth_shift.states) v += 5.0;
    auto qe2 = quarter_errors(pred_shift, truth_shift);
    for (int q = 0; q < 4; ++q) {
        CHECK(qe2.l2[static_cast<std::size_t>(q)] ==
              doctest::Approx(qe.l2[static_cast<std::size_t>(q)]).epsilon(1e-12));
        CHECK(qe2.frechet[static_cast<std::size_t>(q)] ==
              doctest::Approx(qe.frechet[static_cast<std::size_t>(q)]).epsilon(1e-12));
    }

    auto longer = make_traj(std::vector<double>(18, 0.0), std::vector<double>(18 * 3, 0.0));
    CHECK_THROWS_AS(quarter_errors(pred, longer), ValueError);
}

TEST_CASE("the last quarter absorbs a non-divisible remainder") {
    const int T = 18, L = 1;
    std::vector<double> times, states(18, 0.0);
    for (int j = 0; j < T; ++j) times.push_back(j);
    auto truth = make_traj(times, states);
    auto pred = truth;
    pred.state(17)[0] = 3.0;   // lands in Q4 = indices 12..17
    auto qe = quarter_errors(pred, truth);
    CHECK(qe.l2[3] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
    CHECK(qe.l2[2] == 0.0);
}

TEST_CASE("kl divergence: identity, shifted uniforms, asymmetry") {
    Rng rng(94);
    std::vector<double> u1, u2;
    for (int i = 0; i < 100000; ++i) {
        u1.push_back(rng.uniform(0.0, 1.0));
        u2.push_back(rng.uniform(0.5, 1.5));
    }
    CHECK(std::fabs(kl_divergence(u1, u1, 50)) <= 1e-9);
    const double kl12 = kl_divergence(u1, u2, 50);
    const double kl21 = kl_divergence(u2, u1, 50);
    CHECK(kl12 >= 0.3);
    CHECK(kl12 != kl21);
    CHECK_THROWS_AS(kl_divergence({}, u1, 50), ValueError);

    // Gibbs: never meaningfully negative
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a, b;
        for (int i = 0; i < 500; ++i) {
            a.push_back(rng.normal());
            b.push_back(rng.normal() * rng.uniform(0.5, 2.0));
        }
        CHECK(kl_divergence(a, b) >= -1e-9);
    }
}

TEST_CASE("wilson interval matches the nominal half-split case") {
    auto [lo, hi] = wilson_interval(50, 100, 1.96);
    CHECK(lo == doctest::Approx(0.404).epsilon(0.0125));
    CHECK(hi == doctest::Approx(0.596).epsilon(0.0084));
    CHECK(std::fabs(lo - 0.404) <= 0.005);
    CHECK(std::fabs(hi - 0.596) <= 0.005);

    auto [l0, h0] = wilson_interval(0, 1, 1.96);
    CHECK(l0 >= 0.0);
    CHECK(l0 <= 1e-9);
    CHECK(h0 <= 1.0);

    CHECK_THROWS_AS(wilson_interval(-1, 10), ValueError);
    CHECK_THROWS_AS(wilson_interval(11, 10), ValueError);
    CHECK_THROWS_AS(wilson_interval(0, 0), ValueError);
}

TEST_CASE("wilson intervals always bracket the sample fraction inside [0,1]") {
    Rng rng(95);
    for (int rep = 0; rep < 1000; ++rep) {
        const long n = 1 + static_cast<long>(rng.below(100000));
        const long k = static_cast<long>(rng.below(static_cast<std::uint64_t>(n + 1)));
        auto [lo, hi] = wilson_interval(k, n, 1.96);
        const double phat = static_cast<double>(k) / static_cast<double>(n);
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
        CHECK(lo <= phat);
        CHECK(hi >= phat);
    }
}

TEST_CASE("wilson width shrinks as the sample grows") {
    double prev = 1.0;
    for (long n : {10L, 100L, 1000L, 10000L}) {
        const long k = (3 * n) / 10;
        auto [lo, hi] = wilson_interval(k, n, 1.96);
        CHECK(hi - lo < prev);
        prev = hi - lo;
    }
}

TEST_CASE("binary entropy hits its landmarks") {
    CHECK(class_entropy(0.5) == 1.0);
    CHECK(class_entropy(0.0) == 0.0);
    CHECK(class_entropy(1.0) == 0.0);
    CHECK(class_entropy(0.3) == doctest::Approx(class_entropy(0.7)).epsilon(1e-14));
    CHECK_THROWS_AS(class_entropy(-0.01), ValueError);
    CHECK_THROWS_AS(class_entropy(1.01), ValueError);

    // solve H(p) = 0.85 on the lower branch, then round-trip
    const double p = oracle::bisect([](double x) { return class_entropy(x) - 0.85; }, 1e-12, 0.5);
    CHECK(p == doctest::Approx(0.276).epsilon(0.02));
    CHECK(std::fabs(class_entropy(p) - 0.85) <= 1e-6);
}

TEST_CASE("confusion counts and derived rates") {
    const std::vector<int> actual = {1, 1, 0, 0, 1, 0};
    auto perfect = confusion(actual, actual);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);
    CHECK(perfect.accuracy() == 1.0);

    const std::vector<int> all_pos(actual.size(), 1);
    auto cm = confusion(all_pos, actual);
    CHECK(cm.recall() == 1.0);
    CHECK(cm.precision() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cm.tp == 3);
    CHECK(cm.fp == 3);
    CHECK(cm.tn == 0);
    CHECK(cm.fn == 0);

    CHECK_THROWS_AS(confusion({1, 0}, {1}), ValueError);

    const std::vector<int> all_neg(actual.size(), 0);
    auto none = confusion(all_neg, actual);
    CHECK_THROWS_AS(none.precision(), StateError);
    ConfusionMatrix empty;
    CHECK_THROWS_AS(empty.accuracy(), StateError);
}

} // TEST_SUITE
