#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dnae/param_space.hpp"

namespace dnae {

/// Latent-space path of one trial: states is row-major [n_points x latent_dim].
struct Trajectory {
    std::string trial_id;
    ParamVector xi;
    int outcome = -1;                    // -1 = unknown / not labelled
    std::string split;                   // "train", "val", or empty
    std::vector<double> times_us;
    std::vector<double> states;

    int n_points() const { return static_cast<int>(times_us.size()); }
    double* state(int t) { return states.data() + static_cast<std::size_t>(t) * latent_dim(); }
    const double* state(int t) const { return states.data() + static_cast<std::size_t>(t) * latent_dim(); }
    int latent_dim() const {
        return times_us.empty() ? 0 : static_cast<int>(states.size() / times_us.size());
    }
};

struct TrajectorySet {
    int latent_dim = 0;
    std::vector<Trajectory> items;
};

void save_trajectories(const std::filesystem::path& dir, const TrajectorySet& set);
TrajectorySet load_trajectories(const std::filesystem::path& dir);

} // namespace dnae
