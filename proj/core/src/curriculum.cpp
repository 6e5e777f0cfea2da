#include "dnae/curriculum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "dnae/errors.hpp"
#include "dnae/logging.hpp"
#include "dnae/serialize.hpp"
#include "dnae/threading.hpp"

namespace dnae {

TrajectorySet upsample_trajectories(const TrajectorySet& raw, int factor, int n_folds) {
    if (factor < 1) throw ValueError("upsample factor must be >= 1");
    if (raw.items.empty()) throw ValueError("upsample on empty trajectory set");
    const int n_in = raw.items[0].n_points();
    const int n_out = n_in * factor;
    if (n_folds > 0 && n_out % n_folds != 0)
        throw ValueError("upsampled length " + std::to_string(n_out) +
                         " does not divide into " + std::to_string(n_folds) + " folds");
    TrajectorySet out;
    out.latent_dim = raw.latent_dim;
    for (const auto& tr : raw.items) {
        if (tr.n_points() != n_in)
            throw ValueError("trajectory " + tr.trial_id + " has " + std::to_string(tr.n_points()) +
                             " points, expected " + std::to_string(n_in));
        const int L = tr.latent_dim();
        Trajectory up;
        up.trial_id = tr.trial_id;
        up.xi = tr.xi;
        up.outcome = tr.outcome;
        up.split = tr.split;
        up.times_us.resize(static_cast<std::size_t>(n_out));
        up.states.resize(static_cast<std::size_t>(n_out) * L);
        const double t0 = tr.times_us.front(), t1 = tr.times_us.back();
        for (int j = 0; j < n_out; ++j) {
            const double t = t0 + (t1 - t0) * j / (n_out - 1);
            up.times_us[static_cast<std::size_t>(j)] = t;
            // locate the source segment containing t
            auto it = std::upper_bound(tr.times_us.begin(), tr.times_us.end(), t);
            std::size_t hi = std::min<std::size_t>(
                static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - tr.times_us.begin())),
                tr.times_us.size() - 1);
            const std::size_t lo = hi - 1;
            const double ta = tr.times_us[lo], tb = tr.times_us[hi];
            const double a = tb > ta ? (t - ta) / (tb - ta) : 0.0;
            const double* va = tr.state(static_cast<int>(lo));
            const double* vb = tr.state(static_cast<int>(hi));
            double* vo = up.states.data() + static_cast<std::size_t>(j) * L;
            for (int c = 0; c < L; ++c) vo[c] = va[c] + a * (vb[c] - va[c]);
        }
        out.items.push_back(std::move(up));
    }
    return out;
}

static int window_points(int n_points, int active_folds, int n_folds) {
    if (active_folds < 1 || active_folds > n_folds)
        throw ValueError("active_folds " + std::to_string(active_folds) + " outside [1, " +
                         std::to_string(n_folds) + "]");
    if (n_points % n_folds != 0)
        throw ValueError("grid of " + std::to_string(n_points) + " points does not divide into " +
                         std::to_string(n_folds) + " folds");
    return (n_points / n_folds) * active_folds;
}

double stage_loss(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                  int active_folds, int n_folds, double lambda) {
    if (pred.size() != truth.size() || pred.empty())
        throw ValueError("stage_loss: need equal nonempty trajectory lists");
    const int T = window_points(pred[0].n_points(), active_folds, n_folds);
    const int L = pred[0].latent_dim();
    const double n_traj = static_cast<double>(pred.size());
    double pos = 0.0, vel = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        const auto& a = pred[n];
        const auto& b = truth[n];
        if (a.n_points() != b.n_points() || a.latent_dim() != L || a.times_us != b.times_us)
            throw ValueError("stage_loss: trajectory pair " + std::to_string(n) +
                             " does not share its grid");
        for (int t = 0; t < T; ++t) {
            const double* pa = a.state(t);
            const double* pb = b.state(t);
            for (int c = 0; c < L; ++c) {
                const double diff = pa[c] - pb[c];
                pos += diff * diff;
            }
        }
        for (int t = 1; t + 1 < T; ++t) {
            const double inv = 1.0 / (a.times_us[static_cast<std::size_t>(t + 1)] -
                                      a.times_us[static_cast<std::size_t>(t - 1)]);
            const double* ap = a.state(t + 1);
            const double* am = a.state(t - 1);
            const double* bp = b.state(t + 1);
            const double* bm = b.state(t - 1);
            for (int c = 0; c < L; ++c) {
                const double diff = (ap[c] - am[c]) * inv - (bp[c] - bm[c]) * inv;
                vel += diff * diff;
            }
        }
    }
    double loss = pos / (n_traj * T);
    if (T >= 3) loss += lambda * vel / (n_traj * (T - 2));
    return loss;
}

TrainNodeResult train_node(const TrajectorySet& data, NodeMlp& model, const AdamConfig& adam_cfg,
                           CurriculumState& curriculum, const TrainNodeOptions& options) {
    // training pool: "train"-tagged items, or everything when untagged
    std::vector<const Trajectory*> pool;
    for (const auto& tr : data.items)
        if (tr.split == "train") pool.push_back(&tr);
    if (pool.empty())
        for (const auto& tr : data.items) pool.push_back(&tr);
    if (pool.empty()) throw ValueError("train_node: no trajectories");
    const int T_total = pool[0]->n_points();
    const int L = model.config().latent_dim;
    for (const auto* tr : pool) {
        if (tr->latent_dim() != L)
            throw ValueError("trajectory " + tr->trial_id + " latent_dim " +
                             std::to_string(tr->latent_dim()) + " != model " + std::to_string(L));
        if (tr->n_points() != T_total || tr->times_us != pool[0]->times_us)
            throw ValueError("trajectory " + tr->trial_id + " is not on the shared grid");
    }
    window_points(T_total, 1, curriculum.n_folds);   // validates divisibility

    const std::size_t n_traj = pool.size();
    std::vector<std::array<double, kParamCount>> xi_std(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) xi_std[i] = standardize(pool[i]->xi);

    const std::size_t n_param = static_cast<std::size_t>(model.params().scalar_count());
    std::vector<std::vector<double>> chunk_grad(kReductionChunks, std::vector<double>(n_param, 0.0));
    std::vector<double> chunk_pos(kReductionChunks, 0.0), chunk_vel(kReductionChunks, 0.0);
    std::vector<double> merged(n_param, 0.0);

    AdamOptimizer adam(model.params(), adam_cfg);
    TrainNodeResult result;
    const double lambda = model.config().lambda;

    std::ofstream log;
    if (!options.log_csv.empty()) {
        log.open(options.log_csv, std::ios::trunc);
        if (!log) throw IoError("cannot open training log: " + options.log_csv.string());
        log << "iteration,stage_loss,active_folds,lr,wall_ms\n";
    }
    const auto t_start = std::chrono::steady_clock::now();

    long last_advance_iter = 0;
    bool stall_warned = false;

    while (adam.iteration() < adam_cfg.max_iters) {
        const int window = window_points(T_total, curriculum.active_folds, curriculum.n_folds);
        const double scale_pos = 1.0 / (static_cast<double>(n_traj) * window);
        const double scale_vel =
            window >= 3 ? lambda / (static_cast<double>(n_traj) * (window - 2)) : 0.0;

        for (int c = 0; c < kReductionChunks; ++c) {
            std::fill(chunk_grad[static_cast<std::size_t>(c)].begin(),
                      chunk_grad[static_cast<std::size_t>(c)].end(), 0.0);
            chunk_pos[static_cast<std::size_t>(c)] = 0.0;
            chunk_vel[static_cast<std::size_t>(c)] = 0.0;
        }
        parallel_chunks(n_traj, options.threads, [&](int c, std::size_t b, std::size_t e) {
            thread_local NodeWorkspace ws;
            for (std::size_t i = b; i < e; ++i) {
                const auto terms = node_window_forward(model, *pool[i], window,
                                                       xi_std[i].data(), ws);
                chunk_pos[static_cast<std::size_t>(c)] += terms.pos_sum;
                chunk_vel[static_cast<std::size_t>(c)] += terms.vel_sum;
                node_window_backward(model, *pool[i], window, xi_std[i].data(), scale_pos,
                                     scale_vel, ws, chunk_grad[static_cast<std::size_t>(c)].data());
            }
        });
        double pos_total = 0.0, vel_total = 0.0;
        for (int c = 0; c < kReductionChunks; ++c) {
            pos_total += chunk_pos[static_cast<std::size_t>(c)];
            vel_total += chunk_vel[static_cast<std::size_t>(c)];
        }
        std::fill(merged.begin(), merged.end(), 0.0);
        for (int c = 0; c < kReductionChunks; ++c) {
            const auto& g = chunk_grad[static_cast<std::size_t>(c)];
            for (std::size_t p = 0; p < n_param; ++p) merged[p] += g[p];
        }
        const double loss = scale_pos * pos_total + scale_vel * vel_total;
        if (!std::isfinite(loss))
            throw DivergenceError("stage loss became non-finite at iteration " +
                                  std::to_string(adam.iteration() + 1), adam.iteration() + 1);

        model.params().set_grad(merged);
        adam.step();
        const long iter = adam.iteration();
        result.loss_history.push_back(loss);

        if (log) {
            const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - t_start).count();
            log << iter << ',' << fmt_double(loss) << ',' << curriculum.active_folds << ','
                << fmt_double(adam.current_lr()) << ',' << wall << '\n';
        }

        const double advance_loss = curriculum.advance_uses_curvature
                                        ? loss
                                        : scale_pos * pos_total;
        if (advance_loss < curriculum.epsilon) {
            if (curriculum.active_folds < curriculum.n_folds) {
                ++curriculum.active_folds;
                curriculum.event_log.emplace_back(iter, curriculum.active_folds);
                last_advance_iter = iter;
                stall_warned = false;
                log_debug("curriculum advance at iteration " + std::to_string(iter) + " -> " +
                          std::to_string(curriculum.active_folds) + " folds");
            } else {
                result.converged = true;
                result.final_loss = loss;
                break;
            }
        } else if (curriculum.stall_patience > 0 &&
                   iter - last_advance_iter >= curriculum.stall_patience && !stall_warned) {
            log_warn("curriculum stalled: no advance since iteration " +
                     std::to_string(last_advance_iter) + " (active_folds " +
                     std::to_string(curriculum.active_folds) + ")");
            stall_warned = true;
        }
        result.final_loss = loss;

        if (options.checkpoint_every > 0 && !options.checkpoint_dir.empty() &&
            iter % options.checkpoint_every == 0) {
            model.save(options.checkpoint_dir / ("iter_" + std::to_string(iter)));
        }
    }

    result.iterations = adam.iteration();
    result.reached_full_horizon = curriculum.active_folds == curriculum.n_folds;
    log_info("train_node: " + std::to_string(result.iterations) + " iterations, " +
             std::to_string(curriculum.active_folds) + "/" + std::to_string(curriculum.n_folds) +
             " folds, final stage loss " + fmt_double(result.final_loss));
    return result;
}

} // namespace dnae
