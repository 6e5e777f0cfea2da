#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dnae/field.hpp"
#include "dnae/param_space.hpp"

namespace dnae {

/// One simulated firing: its operating point, binary outcome, and the files
/// holding the raw snapshot fields plus the bounds used to normalize them.
struct TrialRecord {
    std::string trial_id;
    ParamVector xi;
    int outcome = 0;                       // 1 = sustained burn, 0 = quench
    std::vector<std::string> frames;       // paths relative to the dataset dir
    std::vector<double> times_us;
    double norm_min = 0.0;
    double norm_max = 1.0;
};

/// On-disk snapshot dataset: manifest.json + one DNT1 file per raw frame.
class Dataset {
public:
    std::filesystem::path dir;
    std::vector<TrialRecord> trials;
    int grid_h = 0, grid_w = 0;
    double pixel_mm = 0.0;
    nlohmann::json meta;                   // generator constants etc., round-tripped

    static Dataset load(const std::filesystem::path& dir);
    void save_manifest() const;

    /// Raw frame as stored.
    Field load_raw_frame(std::size_t trial, std::size_t snapshot) const;
    /// Frame mapped to [0,1] with the trial's stored bounds.
    Field load_frame(std::size_t trial, std::size_t snapshot) const;

    std::size_t n_snapshots() const { return trials.empty() ? 0 : trials[0].times_us.size(); }
};

/// Deterministic per-trial split: every k-th trial (by index) is validation.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};
SplitIndices split_trials(std::size_t n_trials, double val_fraction);

} // namespace dnae
