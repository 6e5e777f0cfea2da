#include "dnae/node.hpp"

#include <array>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dnae/errors.hpp"
#include "dnae/serialize.hpp"

namespace dnae {

using json = nlohmann::json;

namespace {
constexpr double kDivergenceBound = 1e3;   // latents live in (-1,1); far outside = blow-up
}

int NodeConfig::grid_points() const {
    if (!(dt_us > 0.0) || !(t_end_us > t0_us))
        throw ValueError("NodeConfig: need dt > 0 and t_end > t0");
    return static_cast<int>(std::lround((t_end_us - t0_us) / dt_us)) + 1;
}

std::vector<double> NodeConfig::uniform_grid() const {
    const int n = grid_points();
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        t[static_cast<std::size_t>(i)] = t0_us + (t_end_us - t0_us) * i / (n - 1);
    return t;
}

NodeMlp::NodeMlp(NodeConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.latent_dim < 1 || cfg_.hidden_width < 1)
        throw ValueError("NodeConfig: latent_dim and hidden_width must be >= 1");
    if (!(cfg_.t_end_us > cfg_.t0_us)) throw ValueError("NodeConfig: t_end must exceed t0");
    if (cfg_.lambda < 0.0) throw ValueError("NodeConfig: lambda must be >= 0");
    Rng rng(cfg_.seed);
    const int in = input_dim(), w = cfg_.hidden_width, L = cfg_.latent_dim;
    init_he_uniform(*params_.add("w1", {w, in}), in, rng);
    params_.add("b1", {w});
    init_he_uniform(*params_.add("w2", {w, w}), w, rng);
    params_.add("b2", {w});
    params_.add("w3", {L, w});   // zero: training starts from the identity flow
    params_.add("b3", {L});
}

void NodeMlp::rhs(double t_us, const double* v, const double* xi_std, double* dv) const {
    const int L = cfg_.latent_dim, in = input_dim(), w = cfg_.hidden_width;
    thread_local std::vector<double> u, h1, h2;
    u.resize(static_cast<std::size_t>(in));
    h1.resize(static_cast<std::size_t>(w));
    h2.resize(static_cast<std::size_t>(w));
    for (int i = 0; i < L; ++i) u[static_cast<std::size_t>(i)] = v[i];
    for (int i = 0; i < kParamCount; ++i) u[static_cast<std::size_t>(L + i)] = xi_std[i];
    u[static_cast<std::size_t>(in - 1)] = (t_us - cfg_.t0_us) / (cfg_.t_end_us - cfg_.t0_us);

    const double* w1 = params_.items()[0].second->data.data();
    const double* b1 = params_.items()[1].second->data.data();
    const double* w2 = params_.items()[2].second->data.data();
    const double* b2 = params_.items()[3].second->data.data();
    const double* w3 = params_.items()[4].second->data.data();
    const double* b3 = params_.items()[5].second->data.data();

    for (int i = 0; i < w; ++i) {
        const double* row = w1 + static_cast<std::size_t>(i) * in;
        double acc = b1[i];
        for (int j = 0; j < in; ++j) acc += row[j] * u[static_cast<std::size_t>(j)];
        h1[static_cast<std::size_t>(i)] = std::tanh(acc);
    }
    for (int i = 0; i < w; ++i) {
        const double* row = w2 + static_cast<std::size_t>(i) * w;
        double acc = b2[i];
        for (int j = 0; j < w; ++j) acc += row[j] * h1[static_cast<std::size_t>(j)];
        h2[static_cast<std::size_t>(i)] = std::tanh(acc);
    }
    const double ts = 1.0 / (cfg_.t_end_us - cfg_.t0_us);
    for (int i = 0; i < L; ++i) {
        const double* row = w3 + static_cast<std::size_t>(i) * w;
        double acc = b3[i];
        for (int j = 0; j < w; ++j) acc += row[j] * h2[static_cast<std::size_t>(j)];
        dv[i] = acc * ts;
    }
}

std::vector<double> NodeMlp::rhs(double t_us, const std::vector<double>& v,
                                 const ParamVector& xi) const {
    if (static_cast<int>(v.size()) != cfg_.latent_dim)
        throw ValueError("rhs: state has " + std::to_string(v.size()) + " components, expected " +
                         std::to_string(cfg_.latent_dim));
    validate(xi);
    const auto xs = standardize(xi);
    std::vector<double> dv(static_cast<std::size_t>(cfg_.latent_dim));
    rhs(t_us, v.data(), xs.data(), dv.data());
    return dv;
}

TensorPtr NodeMlp::rhs_t(Tape& tape, double t_us, const TensorPtr& v, const TensorPtr& xi_std) const {
    if (v->ndim() != 1 || v->shape[0] != cfg_.latent_dim)
        throw ValueError("rhs_t: state must be [" + std::to_string(cfg_.latent_dim) + "], got " +
                         v->shape_str());
    if (xi_std->ndim() != 1 || xi_std->shape[0] != kParamCount)
        throw ValueError("rhs_t: xi_std must be [" + std::to_string(kParamCount) + "], got " +
                         xi_std->shape_str());
    const double tn = (t_us - cfg_.t0_us) / (cfg_.t_end_us - cfg_.t0_us);
    std::array<TensorPtr, 3> parts{v, xi_std, Tensor::scalar(tn)};
    auto u = tape.concat(parts);
    auto h1 = tape.tanh(tape.dense(u, params_.find("w1"), params_.find("b1")));
    auto h2 = tape.tanh(tape.dense(h1, params_.find("w2"), params_.find("b2")));
    auto out = tape.dense(h2, params_.find("w3"), params_.find("b3"));
    return tape.scale(out, 1.0 / (cfg_.t_end_us - cfg_.t0_us));
}

void NodeMlp::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json m;
    m["format"] = "dnae-node/1";
    m["config"] = {{"latent_dim", cfg_.latent_dim}, {"hidden_width", cfg_.hidden_width},
                   {"t0_us", cfg_.t0_us},           {"t_end_us", cfg_.t_end_us},
                   {"dt_us", cfg_.dt_us},           {"lambda", cfg_.lambda},
                   {"seed", cfg_.seed}};
    write_text_file(dir / "model.json", m.dump(2) + "\n");
    params_.save(dir / "params");
}

NodeMlp NodeMlp::load(const std::filesystem::path& dir) {
    json m;
    try {
        m = json::parse(read_text_file(dir / "model.json"));
    } catch (const json::exception& e) {
        throw IoError("bad model manifest " + (dir / "model.json").string() + ": " + e.what());
    }
    if (m.value("format", "") != "dnae-node/1")
        throw IoError("not a latent-dynamics checkpoint: " + dir.string());
    const auto& c = m.at("config");
    NodeConfig cfg;
    cfg.latent_dim = c.at("latent_dim").get<int>();
    cfg.hidden_width = c.at("hidden_width").get<int>();
    cfg.t0_us = c.at("t0_us").get<double>();
    cfg.t_end_us = c.at("t_end_us").get<double>();
    cfg.dt_us = c.at("dt_us").get<double>();
    cfg.lambda = c.at("lambda").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    NodeMlp model(cfg);
    model.params_.load(dir / "params");
    return model;
}

// ---- integration ----

static void check_times(const std::vector<double>& times) {
    if (times.size() < 2) throw ValueError("integration grid needs >= 2 points");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw ValueError("times must be strictly increasing (violated at index " +
                             std::to_string(i) + ")");
}

std::vector<std::vector<double>> integrate_rk4(const RhsFn& rhs, const std::vector<double>& v0,
                                               const std::vector<double>& times) {
    check_times(times);
    const std::size_t n = v0.size();
    std::vector<std::vector<double>> states;
    states.reserve(times.size());
    states.push_back(v0);
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double t = times[i], dt = times[i + 1] - times[i];
        const auto& v = states.back();
        rhs(t, v.data(), k1.data());
        for (std::size_t c = 0; c < n; ++c) tmp[c] = v[c] + 0.5 * dt * k1[c];
        rhs(t + 0.5 * dt, tmp.data(), k2.data());
        for (std::size_t c = 0; c < n; ++c) tmp[c] = v[c] + 0.5 * dt * k2[c];
        rhs(t + 0.5 * dt, tmp.data(), k3.data());
        for (std::size_t c = 0; c < n; ++c) tmp[c] = v[c] + dt * k3[c];
        rhs(t + dt, tmp.data(), k4.data());
        std::vector<double> next(n);
        for (std::size_t c = 0; c < n; ++c)
            next[c] = v[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        states.push_back(std::move(next));
    }
    return states;
}

Trajectory integrate(const NodeMlp& model, const std::vector<double>& v0, const ParamVector& xi,
                     const std::vector<double>& times) {
    check_times(times);
    const int L = model.config().latent_dim;
    if (static_cast<int>(v0.size()) != L)
        throw ValueError("integrate: v0 has " + std::to_string(v0.size()) +
                         " components, expected " + std::to_string(L));
    const auto xs = standardize(xi);
    Trajectory tr;
    tr.xi = xi;
    tr.times_us = times;
    tr.states.assign(times.size() * static_cast<std::size_t>(L), 0.0);
    std::copy(v0.begin(), v0.end(), tr.states.begin());
    thread_local std::vector<double> k1, k2, k3, k4, tmp;
    k1.resize(static_cast<std::size_t>(L)); k2.resize(static_cast<std::size_t>(L));
    k3.resize(static_cast<std::size_t>(L)); k4.resize(static_cast<std::size_t>(L));
    tmp.resize(static_cast<std::size_t>(L));
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double t = times[i], dt = times[i + 1] - times[i];
        const double* v = tr.state(static_cast<int>(i));
        double* next = tr.state(static_cast<int>(i) + 1);
        model.rhs(t, v, xs.data(), k1.data());
        for (int c = 0; c < L; ++c) tmp[static_cast<std::size_t>(c)] = v[c] + 0.5 * dt * k1[static_cast<std::size_t>(c)];
        model.rhs(t + 0.5 * dt, tmp.data(), xs.data(), k2.data());
        for (int c = 0; c < L; ++c) tmp[static_cast<std::size_t>(c)] = v[c] + 0.5 * dt * k2[static_cast<std::size_t>(c)];
        model.rhs(t + 0.5 * dt, tmp.data(), xs.data(), k3.data());
        for (int c = 0; c < L; ++c) tmp[static_cast<std::size_t>(c)] = v[c] + dt * k3[static_cast<std::size_t>(c)];
        model.rhs(t + dt, tmp.data(), xs.data(), k4.data());
        for (int c = 0; c < L; ++c)
            next[c] = v[c] + dt / 6.0 * (k1[static_cast<std::size_t>(c)] + 2.0 * k2[static_cast<std::size_t>(c)] +
                                         2.0 * k3[static_cast<std::size_t>(c)] + k4[static_cast<std::size_t>(c)]);
        for (int c = 0; c < L; ++c) {
            if (!std::isfinite(next[c]) || std::abs(next[c]) > kDivergenceBound)
                throw DivergenceError("latent state diverged at step " + std::to_string(i + 1),
                                      static_cast<long>(i + 1));
        }
    }
    return tr;
}

std::vector<TensorPtr> integrate_t(Tape& tape, const NodeMlp& model, const TensorPtr& v0,
                                   const TensorPtr& xi_std, const std::vector<double>& times) {
    check_times(times);
    std::vector<TensorPtr> states;
    states.reserve(times.size());
    states.push_back(v0);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double t = times[i], dt = times[i + 1] - times[i];
        const auto& v = states.back();
        auto k1 = model.rhs_t(tape, t, v, xi_std);
        auto k2 = model.rhs_t(tape, t + 0.5 * dt, tape.axpy(0.5 * dt, k1, v), xi_std);
        auto k3 = model.rhs_t(tape, t + 0.5 * dt, tape.axpy(0.5 * dt, k2, v), xi_std);
        auto k4 = model.rhs_t(tape, t + dt, tape.axpy(dt, k3, v), xi_std);
        auto mid = tape.scale(tape.add(k2, k3), 2.0);
        auto sum = tape.add(tape.add(k1, k4), mid);
        states.push_back(tape.axpy(dt / 6.0, sum, v));
    }
    return states;
}

// ---- losses ----

static void require_shared_grid(const Trajectory& a, const Trajectory& b) {
    if (a.n_points() != b.n_points() || a.latent_dim() != b.latent_dim() || a.times_us != b.times_us)
        throw ValueError("trajectory pair does not share its time grid (" + a.trial_id + ")");
}

double node_loss(const std::vector<Trajectory>& pred, const std::vector<Trajectory>& truth,
                 double lambda) {
    if (pred.size() != truth.size() || pred.empty())
        throw ValueError("node_loss: need equal nonempty trajectory lists");
    const int T = pred[0].n_points();
    if (T < 3) throw ValueError("node_loss: need >= 3 points for the derivative term");
    const int L = pred[0].latent_dim();
    const double n_traj = static_cast<double>(pred.size());
    double pos = 0.0, vel = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        require_shared_grid(pred[n], truth[n]);
        if (pred[n].n_points() != T)
            throw ValueError("node_loss: trajectories disagree on grid length");
        for (int t = 0; t < T; ++t) {
            const double* a = pred[n].state(t);
            const double* b = truth[n].state(t);
            for (int c = 0; c < L; ++c) {
                const double d = a[c] - b[c];
                pos += d * d;
            }
        }
        for (int t = 1; t + 1 < T; ++t) {
            const double inv = 1.0 / (pred[n].times_us[static_cast<std::size_t>(t + 1)] -
                                      pred[n].times_us[static_cast<std::size_t>(t - 1)]);
            const double* ap = pred[n].state(t + 1);
            const double* am = pred[n].state(t - 1);
            const double* bp = truth[n].state(t + 1);
            const double* bm = truth[n].state(t - 1);
            for (int c = 0; c < L; ++c) {
                const double d = (ap[c] - am[c]) * inv - (bp[c] - bm[c]) * inv;
                vel += d * d;
            }
        }
    }
    return pos / (n_traj * T) + lambda * vel / (n_traj * (T - 2));
}

// ---- fast training kernel ----

namespace {

struct MlpDims {
    int L, in, w;
    std::size_t rec;          // doubles per eval record: v_e + h1 + h2
    std::size_t step_rec;     // 4 evals
};

MlpDims dims_of(const NodeMlp& m) {
    MlpDims d;
    d.L = m.config().latent_dim;
    d.in = m.input_dim();
    d.w = m.config().hidden_width;
    d.rec = static_cast<std::size_t>(d.L) + 2 * static_cast<std::size_t>(d.w);
    d.step_rec = 4 * d.rec;
    return d;
}

// Forward MLP evaluation that also writes the activation record.
inline void mlp_forward_record(const NodeMlp& model, const MlpDims& d, double t_us,
                               const double* v, const double* xi_std, double* k, double* rec) {
    const auto& items = model.params().items();
    const double* w1 = items[0].second->data.data();
    const double* b1 = items[1].second->data.data();
    const double* w2 = items[2].second->data.data();
    const double* b2 = items[3].second->data.data();
    const double* w3 = items[4].second->data.data();
    const double* b3 = items[5].second->data.data();
    const auto& cfg = model.config();
    const double tn = (t_us - cfg.t0_us) / (cfg.t_end_us - cfg.t0_us);
    const double ts = 1.0 / (cfg.t_end_us - cfg.t0_us);

    double* rec_v = rec;
    double* h1 = rec + d.L;
    double* h2 = h1 + d.w;
    for (int c = 0; c < d.L; ++c) rec_v[c] = v[c];

    for (int i = 0; i < d.w; ++i) {
        const double* row = w1 + static_cast<std::size_t>(i) * d.in;
        double acc = b1[i];
        for (int j = 0; j < d.L; ++j) acc += row[j] * v[j];
        for (int j = 0; j < kParamCount; ++j) acc += row[d.L + j] * xi_std[j];
        acc += row[d.in - 1] * tn;
        h1[i] = std::tanh(acc);
    }
    for (int i = 0; i < d.w; ++i) {
        const double* row = w2 + static_cast<std::size_t>(i) * d.w;
        double acc = b2[i];
        for (int j = 0; j < d.w; ++j) acc += row[j] * h1[j];
        h2[i] = std::tanh(acc);
    }
    for (int i = 0; i < d.L; ++i) {
        const double* row = w3 + static_cast<std::size_t>(i) * d.w;
        double acc = b3[i];
        for (int j = 0; j < d.w; ++j) acc += row[j] * h2[j];
        k[i] = acc * ts;
    }
}

// VJP of one recorded evaluation: accumulates parameter gradients into
// grad_flat and returns d(loss)/d(v_eval) in gv.
inline void mlp_vjp(const NodeMlp& model, const MlpDims& d, double t_us, const double* xi_std,
                    const double* rec, const double* gk, double* grad_flat, double* gv,
                    double* scratch) {
    const auto& items = model.params().items();
    const double* w1 = items[0].second->data.data();
    const double* w2 = items[2].second->data.data();
    const double* w3 = items[4].second->data.data();
    const auto& cfg = model.config();
    const double tn = (t_us - cfg.t0_us) / (cfg.t_end_us - cfg.t0_us);
    const double ts = 1.0 / (cfg.t_end_us - cfg.t0_us);

    const double* rec_v = rec;
    const double* h1 = rec + d.L;
    const double* h2 = h1 + d.w;

    const std::size_t ow1 = 0;
    const std::size_t ob1 = ow1 + static_cast<std::size_t>(d.w) * d.in;
    const std::size_t ow2 = ob1 + static_cast<std::size_t>(d.w);
    const std::size_t ob2 = ow2 + static_cast<std::size_t>(d.w) * d.w;
    const std::size_t ow3 = ob2 + static_cast<std::size_t>(d.w);
    const std::size_t ob3 = ow3 + static_cast<std::size_t>(d.L) * d.w;

    double* gs2 = scratch;            // width w
    double* gs1 = scratch + d.w;      // width w

    // output layer
    for (int i = 0; i < d.w; ++i) gs2[i] = 0.0;
    for (int c = 0; c < d.L; ++c) {
        const double go = gk[c] * ts;
        grad_flat[ob3 + static_cast<std::size_t>(c)] += go;
        double* gw3row = grad_flat + ow3 + static_cast<std::size_t>(c) * d.w;
        const double* w3row = w3 + static_cast<std::size_t>(c) * d.w;
        for (int j = 0; j < d.w; ++j) {
            gw3row[j] += go * h2[j];
            gs2[j] += go * w3row[j];
        }
    }
    // second hidden layer
    for (int i = 0; i < d.w; ++i) gs2[i] *= (1.0 - h2[i] * h2[i]);
    for (int i = 0; i < d.w; ++i) gs1[i] = 0.0;
    for (int i = 0; i < d.w; ++i) {
        const double g = gs2[i];
        grad_flat[ob2 + static_cast<std::size_t>(i)] += g;
        double* gw2row = grad_flat + ow2 + static_cast<std::size_t>(i) * d.w;
        const double* w2row = w2 + static_cast<std::size_t>(i) * d.w;
        for (int j = 0; j < d.w; ++j) {
            gw2row[j] += g * h1[j];
            gs1[j] += g * w2row[j];
        }
    }
    // first hidden layer
    for (int i = 0; i < d.w; ++i) gs1[i] *= (1.0 - h1[i] * h1[i]);
    for (int c = 0; c < d.L; ++c) gv[c] = 0.0;
    for (int i = 0; i < d.w; ++i) {
        const double g = gs1[i];
        grad_flat[ob1 + static_cast<std::size_t>(i)] += g;
        double* gw1row = grad_flat + ow1 + static_cast<std::size_t>(i) * d.in;
        const double* w1row = w1 + static_cast<std::size_t>(i) * d.in;
        for (int j = 0; j < d.L; ++j) {
            gw1row[j] += g * rec_v[j];
            gv[j] += g * w1row[j];
        }
        for (int j = 0; j < kParamCount; ++j) gw1row[d.L + j] += g * xi_std[j];
        gw1row[d.in - 1] += g * tn;
    }
}

} // namespace

WindowTerms node_window_forward(const NodeMlp& model, const Trajectory& truth, int window,
                                const double* xi_std, NodeWorkspace& ws) {
    const auto d = dims_of(model);
    if (window < 2 || window > truth.n_points())
        throw ValueError("node_window_forward: window " + std::to_string(window) +
                         " invalid for trajectory of " + std::to_string(truth.n_points()) + " points");
    const int T = window;
    ws.pred.resize(static_cast<std::size_t>(T) * d.L);
    ws.evals.resize(static_cast<std::size_t>(T - 1) * d.step_rec);
    thread_local std::vector<double> k1, k2, k3, k4, tmp;
    k1.resize(static_cast<std::size_t>(d.L)); k2.resize(static_cast<std::size_t>(d.L));
    k3.resize(static_cast<std::size_t>(d.L)); k4.resize(static_cast<std::size_t>(d.L));
    tmp.resize(static_cast<std::size_t>(d.L));

    std::copy(truth.state(0), truth.state(0) + d.L, ws.pred.begin());
    for (int s = 0; s + 1 < T; ++s) {
        const double t = truth.times_us[static_cast<std::size_t>(s)];
        const double dt = truth.times_us[static_cast<std::size_t>(s + 1)] - t;
        const double* v = ws.pred.data() + static_cast<std::size_t>(s) * d.L;
        double* next = ws.pred.data() + static_cast<std::size_t>(s + 1) * d.L;
        double* rec = ws.evals.data() + static_cast<std::size_t>(s) * d.step_rec;

        mlp_forward_record(model, d, t, v, xi_std, k1.data(), rec);
        for (int c = 0; c < d.L; ++c) tmp[static_cast<std::size_t>(c)] = v[c] + 0.5 * dt * k1[static_cast<std::size_t>(c)];
        mlp_forward_record(model, d, t + 0.5 * dt, tmp.data(), xi_std, k2.data(), rec + d.rec);
        for (int c = 0; c < d.L; ++c) tmp[static_cast<std::size_t>(c)] = v[c] + 0.5 * dt * k2[static_cast<std::size_t>(c)];
        mlp_forward_record(model, d, t + 0.5 * dt, tmp.data(), xi_std, k3.data(), rec + 2 * d.rec);
        for (int c = 0; c < d.L; ++c) tmp[static_cast<std::size_t>(c)] = v[c] + dt * k3[static_cast<std::size_t>(c)];
        mlp_forward_record(model, d, t + dt, tmp.data(), xi_std, k4.data(), rec + 3 * d.rec);
        for (int c = 0; c < d.L; ++c)
            next[c] = v[c] + dt / 6.0 * (k1[static_cast<std::size_t>(c)] + 2.0 * k2[static_cast<std::size_t>(c)] +
                                         2.0 * k3[static_cast<std::size_t>(c)] + k4[static_cast<std::size_t>(c)]);
    }

    WindowTerms terms;
    for (int t = 0; t < T; ++t) {
        const double* a = ws.pred.data() + static_cast<std::size_t>(t) * d.L;
        const double* b = truth.state(t);
        for (int c = 0; c < d.L; ++c) {
            const double diff = a[c] - b[c];
            terms.pos_sum += diff * diff;
        }
    }
    for (int t = 1; t + 1 < T; ++t) {
        const double inv = 1.0 / (truth.times_us[static_cast<std::size_t>(t + 1)] -
                                  truth.times_us[static_cast<std::size_t>(t - 1)]);
        const double* ap = ws.pred.data() + static_cast<std::size_t>(t + 1) * d.L;
        const double* am = ws.pred.data() + static_cast<std::size_t>(t - 1) * d.L;
        const double* bp = truth.state(t + 1);
        const double* bm = truth.state(t - 1);
        for (int c = 0; c < d.L; ++c) {
            const double diff = (ap[c] - am[c]) * inv - (bp[c] - bm[c]) * inv;
            terms.vel_sum += diff * diff;
        }
    }
    return terms;
}

void node_window_backward(const NodeMlp& model, const Trajectory& truth, int window,
                          const double* xi_std, double scale_pos, double scale_vel,
                          NodeWorkspace& ws, double* grad_flat) {
    const auto d = dims_of(model);
    const int T = window;
    if (ws.pred.size() != static_cast<std::size_t>(T) * d.L)
        throw StateError("node_window_backward without a matching forward pass");
    ws.gstate.assign(static_cast<std::size_t>(T) * d.L, 0.0);
    ws.scratch.resize(2 * static_cast<std::size_t>(d.w));

    for (int t = 0; t < T; ++t) {
        const double* a = ws.pred.data() + static_cast<std::size_t>(t) * d.L;
        const double* b = truth.state(t);
        double* g = ws.gstate.data() + static_cast<std::size_t>(t) * d.L;
        for (int c = 0; c < d.L; ++c) g[c] += 2.0 * scale_pos * (a[c] - b[c]);
    }
    if (T >= 3 && scale_vel != 0.0) {
        for (int t = 1; t + 1 < T; ++t) {
            const double inv = 1.0 / (truth.times_us[static_cast<std::size_t>(t + 1)] -
                                      truth.times_us[static_cast<std::size_t>(t - 1)]);
            const double* ap = ws.pred.data() + static_cast<std::size_t>(t + 1) * d.L;
            const double* am = ws.pred.data() + static_cast<std::size_t>(t - 1) * d.L;
            const double* bp = truth.state(t + 1);
            const double* bm = truth.state(t - 1);
            double* gp = ws.gstate.data() + static_cast<std::size_t>(t + 1) * d.L;
            double* gm = ws.gstate.data() + static_cast<std::size_t>(t - 1) * d.L;
            for (int c = 0; c < d.L; ++c) {
                const double diff = (ap[c] - am[c]) * inv - (bp[c] - bm[c]) * inv;
                const double g = 2.0 * scale_vel * diff * inv;
                gp[c] += g;
                gm[c] -= g;
            }
        }
    }

    thread_local std::vector<double> a_adj, gk1, gk2, gk3, gk4, gv;
    a_adj.resize(static_cast<std::size_t>(d.L));
    gk1.resize(static_cast<std::size_t>(d.L)); gk2.resize(static_cast<std::size_t>(d.L));
    gk3.resize(static_cast<std::size_t>(d.L)); gk4.resize(static_cast<std::size_t>(d.L));
    gv.resize(static_cast<std::size_t>(d.L));

    const double* glast = ws.gstate.data() + static_cast<std::size_t>(T - 1) * d.L;
    for (int c = 0; c < d.L; ++c) a_adj[static_cast<std::size_t>(c)] = glast[c];

    for (int s = T - 2; s >= 0; --s) {
        const double t = truth.times_us[static_cast<std::size_t>(s)];
        const double dt = truth.times_us[static_cast<std::size_t>(s + 1)] - t;
        const double* rec = ws.evals.data() + static_cast<std::size_t>(s) * d.step_rec;
        for (int c = 0; c < d.L; ++c) {
            const double a = a_adj[static_cast<std::size_t>(c)];
            gk1[static_cast<std::size_t>(c)] = a * dt / 6.0;
            gk2[static_cast<std::size_t>(c)] = a * dt / 3.0;
            gk3[static_cast<std::size_t>(c)] = a * dt / 3.0;
            gk4[static_cast<std::size_t>(c)] = a * dt / 6.0;
        }
        // eval 4 at t+dt, input v + dt*k3
        mlp_vjp(model, d, t + dt, xi_std, rec + 3 * d.rec, gk4.data(), grad_flat, gv.data(),
                ws.scratch.data());
        for (int c = 0; c < d.L; ++c) {
            a_adj[static_cast<std::size_t>(c)] += gv[static_cast<std::size_t>(c)];
            gk3[static_cast<std::size_t>(c)] += dt * gv[static_cast<std::size_t>(c)];
        }
        // eval 3 at t+dt/2, input v + dt/2*k2
        mlp_vjp(model, d, t + 0.5 * dt, xi_std, rec + 2 * d.rec, gk3.data(), grad_flat, gv.data(),
                ws.scratch.data());
        for (int c = 0; c < d.L; ++c) {
            a_adj[static_cast<std::size_t>(c)] += gv[static_cast<std::size_t>(c)];
            gk2[static_cast<std::size_t>(c)] += 0.5 * dt * gv[static_cast<std::size_t>(c)];
        }
        // eval 2 at t+dt/2, input v + dt/2*k1
        mlp_vjp(model, d, t + 0.5 * dt, xi_std, rec + d.rec, gk2.data(), grad_flat, gv.data(),
                ws.scratch.data());
        for (int c = 0; c < d.L; ++c) {
            a_adj[static_cast<std::size_t>(c)] += gv[static_cast<std::size_t>(c)];
            gk1[static_cast<std::size_t>(c)] += 0.5 * dt * gv[static_cast<std::size_t>(c)];
        }
        // eval 1 at t, input v
        mlp_vjp(model, d, t, xi_std, rec, gk1.data(), grad_flat, gv.data(), ws.scratch.data());
        const double* gs = ws.gstate.data() + static_cast<std::size_t>(s) * d.L;
        for (int c = 0; c < d.L; ++c)
            a_adj[static_cast<std::size_t>(c)] += gv[static_cast<std::size_t>(c)] + gs[c];
    }
}

} // namespace dnae
