#pragma once

#include <filesystem>
#include <vector>

#include "dnae/node.hpp"
#include "dnae/params.hpp"
#include "dnae/trajectory.hpp"

namespace dnae {

/// Staged-horizon training state. The upsampled grid is divided into n_folds
/// contiguous folds; training sees the first active_folds of them and the
/// window grows by one fold whenever the stage loss clears epsilon.
struct CurriculumState {
    int n_folds = 50;
    int active_folds = 1;
    double epsilon = 1e-4;
    int upsample_factor = 10;
    bool advance_uses_curvature = true;   // include the lambda term in the advance test
    long stall_patience = 20000;          // iterations without advance before warning
    std::vector<std::pair<long, int>> event_log;   // (iteration, active_folds after advance)
};

/// Piecewise-linear resample of every trajectory onto a uniform grid of
/// n_points * factor points spanning [t_first, t_last]. The result length
/// must divide evenly into n_folds.
TrajectorySet upsample_trajectories(const TrajectorySet& raw, int factor, int n_folds);

/// node_loss restricted to the first active_folds folds of the grid.
double stage_loss(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                  int active_folds, int n_folds, double lambda);

struct TrainNodeOptions {
    int threads = 1;
    std::filesystem::path log_csv;          // per-iteration CSV (empty = no log)
    std::filesystem::path checkpoint_dir;   // periodic checkpoints (empty = none)
    long checkpoint_every = 0;
};

struct TrainNodeResult {
    std::vector<double> loss_history;       // stage loss at every iteration
    long iterations = 0;
    double final_loss = 0.0;
    bool reached_full_horizon = false;
    bool converged = false;                 // full horizon and loss < epsilon
};

/// Curriculum training of the NODE on upsampled latent trajectories tagged
/// split == "train". Full-batch Adam; deterministic for a fixed seed and
/// thread count-independent gradient reduction.
TrainNodeResult train_node(const TrajectorySet& data, NodeMlp& model, const AdamConfig& adam_cfg,
                           CurriculumState& curriculum, const TrainNodeOptions& options = {});

} // namespace dnae
