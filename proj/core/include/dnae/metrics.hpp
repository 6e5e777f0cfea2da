#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "dnae/trajectory.hpp"

namespace dnae {

/// Per-temporal-quarter trajectory discrepancy. Quarters split the grid into
/// four contiguous runs; when the length is not divisible by 4 the last
/// quarter absorbs the remainder.
struct QuarterErrors {
    std::array<double, 4> frechet{};
    std::array<double, 4> l2{};
};

struct ConfusionMatrix {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
    double accuracy() const;
    double precision() const;   // positive class
    double recall() const;
};

/// Discrete Fréchet distance between polylines in R^d via the standard
/// coupling-lattice dynamic program with Euclidean point distance.
/// Points are row-major [n x d].
double discrete_frechet(const std::vector<double>& a, const std::vector<double>& b, int dim);

QuarterErrors quarter_errors(const Trajectory& pred, const Trajectory& truth);

/// Histogram KL divergence D(p||q) in nats: shared bin edges spanning the
/// pooled sample range, additive 1e-12 mass regularization per bin.
double kl_divergence(const std::vector<double>& samples_p, const std::vector<double>& samples_q,
                     int bins = 50);

/// Wilson score interval for `successes` out of `n` at confidence z.
std::pair<double, double> wilson_interval(long successes, long n, double z = 1.96);

/// Binary entropy in bits, with the 0·log0 = 0 convention.
double class_entropy(double p);

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual);

} // namespace dnae
