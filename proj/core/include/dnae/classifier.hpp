#pragma once

#include <filesystem>
#include <vector>

#include "dnae/field.hpp"
#include "dnae/trajectory.hpp"

namespace dnae {

/// Isotherm-area time series for one trial: the superlevel-set area per frame.
struct IsothermSeries {
    double threshold = 0.0;
    std::vector<double> areas;      // pixel-area units, aligned with times
    std::vector<double> times_us;
};

/// Area of the superlevel set {value >= threshold}: pixel count times pixel_area.
double isotherm_area(const Field& x, double threshold, double pixel_area = 1.0);

/// Builds the per-frame area series for a sequence of decoded fields.
IsothermSeries isotherm_series(const std::vector<Field>& frames,
                               const std::vector<double>& times_us, double threshold,
                               double pixel_area = 1.0);

/// Growth test on the trailing window: success iff at least 80% of the final
/// `window` pairwise increments are strictly positive. Needs window+1 frames.
bool classify_by_area(const IsothermSeries& series, int window = 5);

/// Branch-separation rule on one latent component: success iff the minimum of
/// V[component] over the final quarter of the trajectory lies below threshold.
bool classify_by_latent(const Trajectory& traj, int component, double branch_threshold);

/// Calibrated latent-branch classifier. `sign` selects the excursion direction
/// the success class takes (+1: drops below threshold, -1: rises above).
struct BranchClassifier {
    int component = 0;
    double threshold = 0.0;
    int sign = +1;
    bool calibrated = false;

    bool classify(const Trajectory& traj) const;
    void save(const std::filesystem::path& file) const;
    static BranchClassifier load(const std::filesystem::path& file);
};

/// Sweeps every (component, direction) pair for the threshold maximizing
/// balanced accuracy on labeled trajectories; ties resolve to the lowest
/// component index, then to sign +1, then to the smallest threshold.
BranchClassifier calibrate_branch(const std::vector<Trajectory>& training);

} // namespace dnae
