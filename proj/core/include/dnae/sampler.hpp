#pragma once

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "dnae/classifier.hpp"
#include "dnae/node.hpp"
#include "dnae/param_space.hpp"

namespace dnae {

/// Component-wise envelope of a parameter ensemble, in raw units.
struct EnsembleBounds {
    std::array<double, kParamCount> lo{};
    std::array<double, kParamCount> hi{};

    static EnsembleBounds from(const std::vector<ParamVector>& ensemble);
};

/// Accept iff every component of xi lies inside the ensemble envelope.
bool constrain_sample(const ParamVector& xi, const EnsembleBounds& bounds);

/// Gaussian-kernel interpolant mapping standardized xi to a latent state.
/// Weights solve (K + ridge*I) W = V via Cholesky; a single distinct center
/// degenerates to a constant predictor.
class RbfModel {
public:
    /// length_scale <= 0 selects the median pairwise center distance.
    static RbfModel fit(const std::vector<ParamVector>& xis,
                        const std::vector<std::vector<double>>& v0, double length_scale = 0.0,
                        double ridge = 1e-8);

    std::vector<double> eval(const ParamVector& xi) const;
    void eval_std(const double* xi_std, double* out) const;

    int latent_dim() const { return latent_dim_; }
    std::size_t n_centers() const { return centers_.size(); }
    double length_scale() const { return length_scale_; }
    double ridge() const { return ridge_; }
    const EnsembleBounds& bounds() const { return bounds_; }

    void save(const std::filesystem::path& file) const;
    static RbfModel load(const std::filesystem::path& file);

private:
    std::vector<std::array<double, kParamCount>> centers_;   // standardized
    std::vector<double> values_;    // [n_centers x latent_dim]
    std::vector<double> weights_;   // [n_centers x latent_dim]
    int latent_dim_ = 0;
    double length_scale_ = 1.0;
    double ridge_ = 1e-8;
    bool constant_ = false;
    EnsembleBounds bounds_{};
};

/// fit_rbf per the module contract; thin wrapper over RbfModel::fit.
inline RbfModel fit_rbf(const std::vector<ParamVector>& xis,
                        const std::vector<std::vector<double>>& v0, double length_scale = 0.0,
                        double ridge = 1e-8) {
    return RbfModel::fit(xis, v0, length_scale, ridge);
}

/// One campaign outcome. label: 1 success, 0 failure, -1 invalid (divergent).
struct CampaignRecord {
    ParamVector xi;
    int label = 0;
    double t_end_us = 0.0;
    std::vector<double> v_terminal;
};

struct ContourLine {
    double level = 0.0;
    bool closed = false;
    std::vector<std::array<double, 2>> points;
};

/// Binned joint ignition-probability estimate over two xi components.
struct ProbabilityMap {
    int axis_a = 0;
    int axis_b = 0;
    std::vector<double> edges_a;            // bins_a + 1
    std::vector<double> edges_b;            // bins_b + 1
    std::vector<long> counts_success;       // [bins_a x bins_b], a-major
    std::vector<long> counts_total;
    std::vector<double> p_hat;              // exact per-cell ratio; NaN where no data
    std::vector<double> p_smooth;           // 3x3 box average over cells with data
    std::vector<ContourLine> contours;      // levels {0.5, 0.75, 0.9} on p_smooth

    int bins_a() const { return static_cast<int>(edges_a.size()) - 1; }
    int bins_b() const { return static_cast<int>(edges_b.size()) - 1; }
    double center_a(int ia) const { return 0.5 * (edges_a[ia] + edges_a[ia + 1]); }
    double center_b(int ib) const { return 0.5 * (edges_b[ib] + edges_b[ib + 1]); }
};

/// Incremental per-cell counting with fixed edges, so snapshot maps taken at
/// different sample counts share an aligned grid.
class MapAccumulator {
public:
    MapAccumulator(int axis_a, int axis_b, int bins_a, int bins_b, double lo_a, double hi_a,
                   double lo_b, double hi_b);

    void add(const ParamVector& xi, bool success);
    ProbabilityMap finish() const;   // computes p_hat, smoothing, contours

private:
    ProbabilityMap map_;
};

/// Map over explicit ranges (aligned grids across record subsets).
ProbabilityMap probability_map(const std::vector<CampaignRecord>& records, int axis_a, int axis_b,
                               int bins_a, int bins_b, double lo_a, double hi_a, double lo_b,
                               double hi_b);

/// Map with ranges taken from the records themselves.
ProbabilityMap probability_map(const std::vector<CampaignRecord>& records, int axis_a, int axis_b,
                               int bins_a = 25, int bins_b = 25);

/// Mean absolute difference of p_hat over cells where both maps have data.
double map_mean_abs_difference(const ProbabilityMap& a, const ProbabilityMap& b);

/// Parse a campaign records.csv back into memory (inverse of run_campaign's
/// streaming writer).
std::vector<CampaignRecord> read_records_csv(const std::filesystem::path& file);

void write_map_csv(const ProbabilityMap& map, const std::filesystem::path& file);
void write_contours_csv(const ProbabilityMap& map, const std::filesystem::path& file);
void write_map_pgm(const ProbabilityMap& map, const std::filesystem::path& file);

struct CampaignConfig {
    long n_samples = 100000;
    unsigned long long seed = 7;
    int threads = 1;
    int map_bins = 25;
    bool write_pgm = false;
    std::vector<std::pair<int, int>> axis_pairs = {{2, 5}, {2, 4}};
    std::vector<double> snapshot_fractions = {0.25, 0.5, 1.0};
};

struct CampaignSummary {
    long n_samples = 0;
    long n_success = 0;
    long n_failure = 0;
    long n_invalid = 0;

    /// Ignition fraction over valid records only.
    double success_fraction() const {
        const long valid = n_success + n_failure;
        return valid > 0 ? static_cast<double>(n_success) / valid : 0.0;
    }
};

/// Streams n_samples accepted-sample records to out_dir/records.csv, keeps
/// per-axis-pair probability maps, and writes map/contour snapshots at the
/// configured fractions. Output bytes depend only on (inputs, seed), not on
/// the thread count.
CampaignSummary run_campaign(const NodeMlp& model, const RbfModel& rbf,
                             const BranchClassifier& classifier, const CampaignConfig& cfg,
                             const std::filesystem::path& out_dir);

} // namespace dnae
