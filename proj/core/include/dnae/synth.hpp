#pragma once

#include <filesystem>
#include <vector>

#include "dnae/dataset.hpp"
#include "dnae/field.hpp"
#include "dnae/param_space.hpp"

namespace dnae {

/// Synthetic emission-field generator. Each trial evolves a single luminous
/// kernel whose growth either runs away (sustained burn) or starves out,
/// decided by a logistic switch over the operating condition. Everything is
/// smooth in (xi, t) and fully deterministic given the seed.
struct SynthConfig {
    int grid_h = 96;
    int grid_w = 48;
    double pixel_mm = 0.125;
    int n_trials = 300;
    int n_snapshots = 20;
    double horizon_us = 500.0;
    double t_ignite_us = 250.0;    // branch point of the two regimes
    double osc_period_us = 60.0;   // sustained-burn flicker period
    double osc_amplitude = 0.03;
    double switch_gain = 2.0;      // weight on the dominant switch inputs
    double theta0 = 1.0;           // switch offset; higher = fewer successes
    double iso_threshold_raw = 0.25;
    std::uint64_t seed = 2024;
};

/// Kernel descriptor at one instant.
struct KernelState {
    double t_us = 0.0;
    double cx_mm = 0.0, cy_mm = 0.0;   // centre (x across width, y across height)
    double radius_mm = 0.5;
    double intensity = 0.0;
};

/// Logistic-switch argument z and probability s = sigma(z). Success is s >= 0.5.
double switch_argument(const ParamVector& xi, const SynthConfig& cfg);
double switch_probability(const ParamVector& xi, const SynthConfig& cfg);

/// Deterministic kernel history on the snapshot grid; .second is the outcome.
std::pair<std::vector<KernelState>, int> evolve_kernel(const ParamVector& xi,
                                                       const SynthConfig& cfg);

/// Raw (unnormalized) emission field for one kernel state.
Field render_ir(const KernelState& k, const SynthConfig& cfg);

/// Uniform snapshot times in [0, horizon].
std::vector<double> snapshot_times(const SynthConfig& cfg);

/// Generate n_trials cases, render and store all frames, write manifest.json.
Dataset build_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

} // namespace dnae
