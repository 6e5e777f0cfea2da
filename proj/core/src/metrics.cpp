#include "dnae/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dnae/errors.hpp"

namespace dnae {

double ConfusionMatrix::accuracy() const {
    const long t = total();
    if (t == 0) throw StateError("accuracy undefined on empty confusion matrix");
    return static_cast<double>(tp + tn) / static_cast<double>(t);
}

double ConfusionMatrix::precision() const {
    if (tp + fp == 0) throw StateError("precision undefined: no positive predictions");
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ConfusionMatrix::recall() const {
    if (tp + fn == 0) throw StateError("recall undefined: no positive cases");
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

static double point_dist(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double discrete_frechet(const std::vector<double>& a, const std::vector<double>& b, int dim) {
    if (dim < 1) throw ValueError("discrete_frechet: dim must be >= 1");
    if (a.empty() || b.empty() || a.size() % dim != 0 || b.size() % dim != 0)
        throw ValueError("discrete_frechet: polylines must be nonempty multiples of dim");
    const std::size_t n = a.size() / static_cast<std::size_t>(dim);
    const std::size_t m = b.size() / static_cast<std::size_t>(dim);
    // One rolling row of the coupling lattice keeps memory at O(m).
    std::vector<double> row(m);
    auto pa = [&](std::size_t i) { return a.data() + i * static_cast<std::size_t>(dim); };
    auto pb = [&](std::size_t j) { return b.data() + j * static_cast<std::size_t>(dim); };
    row[0] = point_dist(pa(0), pb(0), dim);
    for (std::size_t j = 1; j < m; ++j)
        row[j] = std::max(row[j - 1], point_dist(pa(0), pb(j), dim));
    for (std::size_t i = 1; i < n; ++i) {
        double diag = row[0];
        row[0] = std::max(row[0], point_dist(pa(i), pb(0), dim));
        for (std::size_t j = 1; j < m; ++j) {
            const double best = std::min({diag, row[j], row[j - 1]});
            diag = row[j];
            row[j] = std::max(best, point_dist(pa(i), pb(j), dim));
        }
    }
    return row[m - 1];
}

static void quarter_bounds(int n, int q, int& begin, int& end) {
    const int base = n / 4;
    begin = q * base;
    end = q == 3 ? n : begin + base;
}

QuarterErrors quarter_errors(const Trajectory& pred, const Trajectory& truth) {
    if (pred.n_points() != truth.n_points() || pred.latent_dim() != truth.latent_dim())
        throw ValueError("quarter_errors: trajectory grids differ (" +
                         std::to_string(pred.n_points()) + "x" + std::to_string(pred.latent_dim()) +
                         " vs " + std::to_string(truth.n_points()) + "x" +
                         std::to_string(truth.latent_dim()) + ")");
    const int n = pred.n_points(), d = pred.latent_dim();
    if (n < 4) throw ValueError("quarter_errors: need at least 4 points");
    QuarterErrors qe;
    for (int q = 0; q < 4; ++q) {
        int b, e;
        quarter_bounds(n, q, b, e);
        const std::size_t off = static_cast<std::size_t>(b) * d;
        const std::size_t len = static_cast<std::size_t>(e - b) * d;
        std::vector<double> pa(pred.states.begin() + static_cast<std::ptrdiff_t>(off),
                               pred.states.begin() + static_cast<std::ptrdiff_t>(off + len));
        std::vector<double> pb(truth.states.begin() + static_cast<std::ptrdiff_t>(off),
                               truth.states.begin() + static_cast<std::ptrdiff_t>(off + len));
        qe.frechet[static_cast<std::size_t>(q)] = discrete_frechet(pa, pb, d);
        double acc = 0.0;
        for (int t = b; t < e; ++t) acc += point_dist(pred.state(t), truth.state(t), d);
        qe.l2[static_cast<std::size_t>(q)] = acc / static_cast<double>(e - b);
    }
    return qe;
}

double kl_divergence(const std::vector<double>& samples_p, const std::vector<double>& samples_q,
                     int bins) {
    if (samples_p.empty() || samples_q.empty())
        throw ValueError("kl_divergence: both sample sets must be nonempty");
    if (bins < 1) throw ValueError("kl_divergence: bins must be >= 1");
    double lo = samples_p[0], hi = samples_p[0];
    for (double v : samples_p) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : samples_q) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (!(hi > lo)) hi = lo + 1.0;   // all samples identical: single occupied bin
    const double width = (hi - lo) / bins;
    std::vector<double> hp(static_cast<std::size_t>(bins), 0.0), hq(hp);
    auto bin_of = [&](double v) {
        int b = static_cast<int>((v - lo) / width);
        return static_cast<std::size_t>(std::clamp(b, 0, bins - 1));
    };
    for (double v : samples_p) hp[bin_of(v)] += 1.0;
    for (double v : samples_q) hq[bin_of(v)] += 1.0;
    constexpr double reg = 1e-12;
    double mass_p = 0.0, mass_q = 0.0;
    for (int b = 0; b < bins; ++b) {
        mass_p += hp[static_cast<std::size_t>(b)] + reg;
        mass_q += hq[static_cast<std::size_t>(b)] + reg;
    }
    double kl = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double p = (hp[static_cast<std::size_t>(b)] + reg) / mass_p;
        const double q = (hq[static_cast<std::size_t>(b)] + reg) / mass_q;
        kl += p * std::log(p / q);
    }
    return kl;
}

std::pair<double, double> wilson_interval(long successes, long n, double z) {
    if (n < 1) throw ValueError("wilson_interval: n must be >= 1");
    if (successes < 0 || successes > n)
        throw ValueError("wilson_interval: successes " + std::to_string(successes) +
                         " outside [0, " + std::to_string(n) + "]");
    const double nn = static_cast<double>(n);
    const double phat = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = phat + z2 / (2.0 * nn);
    const double margin = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn));
    // The exact interval lies within [0,1]; rounding can push the endpoints
    // a few ulp past the boundary cases k=0 and k=n, so pin them back.
    return {std::max(0.0, (centre - margin) / denom), std::min(1.0, (centre + margin) / denom)};
}

double class_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw ValueError("class_entropy: p must lie in [0,1], got " + std::to_string(p));
    auto term = [](double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; };
    return term(p) + term(1.0 - p);
}

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.size() != actual.size())
        throw ValueError("confusion: length mismatch " + std::to_string(predicted.size()) + " vs " +
                         std::to_string(actual.size()));
    ConfusionMatrix m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] != 0, a = actual[i] != 0;
        if (p && a) ++m.tp;
        else if (p  && !a) ++m.fp;
        else if (!p && !a) ++m.tn;
        else ++m.fn;
    }
    return m;
}

} // namespace dnae
