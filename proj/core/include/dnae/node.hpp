#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "dnae/param_space.hpp"
#include "dnae/params.hpp"
#include "dnae/tensor.hpp"
#include "dnae/trajectory.hpp"

namespace dnae {

/// Latent dynamics dV/dt = f(xi, t, V; theta): an MLP with two tanh hidden
/// layers of width w over the concatenated input [V, standardized xi,
/// normalized t]. The output layer starts at zero so the initial flow is the
/// identity map.
struct NodeConfig {
    int latent_dim = 8;
    int hidden_width = 400;
    double t0_us = 0.0;
    double t_end_us = 500.0;
    double dt_us = 500.0 / 199.0;    // default grid: 200 uniform points
    double lambda = 1e-2;            // curvature weight in node_loss
    std::uint64_t seed = 42;

    int grid_points() const;
    std::vector<double> uniform_grid() const;
};

class NodeMlp {
public:
    explicit NodeMlp(NodeConfig cfg);

    const NodeConfig& config() const { return cfg_; }
    NetworkParams& params() { return params_; }
    const NetworkParams& params() const { return params_; }

    /// dV/dt at (t, v) for standardized xi (length 15). Plain, allocation-free.
    void rhs(double t_us, const double* v, const double* xi_std, double* dv) const;
    /// Same, taking a raw parameter vector.
    std::vector<double> rhs(double t_us, const std::vector<double>& v, const ParamVector& xi) const;

    /// Taped rhs for gradient checks and the differentiable integrate path.
    TensorPtr rhs_t(Tape& tape, double t_us, const TensorPtr& v, const TensorPtr& xi_std) const;

    void save(const std::filesystem::path& dir) const;
    static NodeMlp load(const std::filesystem::path& dir);

    int input_dim() const { return cfg_.latent_dim + kParamCount + 1; }

private:
    NodeConfig cfg_;
    NetworkParams params_;
};

/// Generic fixed-step RK4 over an explicit time grid (one step per interval).
/// Used directly by tests with injected right-hand sides.
using RhsFn = std::function<void(double t, const double* v, double* dv)>;
std::vector<std::vector<double>> integrate_rk4(const RhsFn& rhs, const std::vector<double>& v0,
                                               const std::vector<double>& times);

/// NODE integration (plain, fast path). Throws DivergenceError with the step
/// index if the state leaves the trusted region or turns non-finite.
Trajectory integrate(const NodeMlp& model, const std::vector<double>& v0, const ParamVector& xi,
                     const std::vector<double>& times);

/// Differentiable integration: returns the taped state at every grid point.
std::vector<TensorPtr> integrate_t(Tape& tape, const NodeMlp& model, const TensorPtr& v0,
                                   const TensorPtr& xi_std, const std::vector<double>& times);

/// Eq.-style trajectory loss: mean squared position error over all points
/// plus lambda times the mean squared central-difference velocity error over
/// interior points. Trajectory pairs must share grids.
double node_loss(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                 double lambda);

// ---- fast training kernel ----

/// Scratch space for one trajectory window (forward states + per-eval
/// activations) so repeated calls never allocate.
struct NodeWorkspace {
    std::vector<double> pred;     // [T x L] integrated states
    std::vector<double> evals;    // per-step activation records
    std::vector<double> gstate;   // [T x L] dLoss/dState
    std::vector<double> scratch;  // MLP temporaries
};

struct WindowTerms {
    double pos_sum = 0.0;   // sum over window points of |pred - truth|^2
    double vel_sum = 0.0;   // sum over interior points of |dpred - dtruth|^2
};

/// Integrate the first `window` points of `truth`'s grid from its initial
/// state and record activations for the backward sweep.
WindowTerms node_window_forward(const NodeMlp& model, const Trajectory& truth, int window,
                                const double* xi_std, NodeWorkspace& ws);

/// Backward sweep matching the last node_window_forward call. Position and
/// velocity gradients are premultiplied by scale_pos / scale_vel; parameter
/// gradients accumulate into grad_flat (canonical parameter order).
void node_window_backward(const NodeMlp& model, const Trajectory& truth, int window,
                          const double* xi_std, double scale_pos, double scale_vel,
                          NodeWorkspace& ws, double* grad_flat);

} // namespace dnae
