#include "dnae/autoencoder.hpp"

#include <array>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dnae/errors.hpp"
#include "dnae/logging.hpp"
#include "dnae/serialize.hpp"

namespace dnae {

using json = nlohmann::json;

Autoencoder::Autoencoder(AeConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.block_channels.size() != 3)
        throw ValueError("block_channels must list 3 stages, got " +
                         std::to_string(cfg_.block_channels.size()));
    if (cfg_.input_h % 8 != 0 || cfg_.input_w % 8 != 0)
        throw ValueError("input dims must be divisible by 8, got " + std::to_string(cfg_.input_h) +
                         "x" + std::to_string(cfg_.input_w));
    if (cfg_.kernel % 2 != 1) throw ValueError("kernel size must be odd");
    build();
}

void Autoencoder::build() {
    Rng rng(cfg_.seed);
    const int k = cfg_.kernel;
    auto conv = [&](const std::string& name, int oc, int ic, int kk, bool encoder_side) {
        auto w = params_.add(name + ".w", {oc, ic, kk, kk});
        init_he_uniform(*w, ic * kk * kk, rng);
        auto b = params_.add(name + ".b", {oc});
        if (encoder_side) {
            encoder_weight_names_.push_back(name + ".w");
            encoder_weight_scalars_ += w->size();
        }
        return w;
    };
    auto fc = [&](const std::string& name, int n_out, int n_in, bool encoder_side) {
        auto w = params_.add(name + ".w", {n_out, n_in});
        init_he_uniform(*w, n_in, rng);
        params_.add(name + ".b", {n_out});
        if (encoder_side) {
            encoder_weight_names_.push_back(name + ".w");
            encoder_weight_scalars_ += w->size();
        }
    };

    int ic = 1;
    for (int s = 0; s < 3; ++s) {
        const int oc = cfg_.block_channels[static_cast<std::size_t>(s)];
        const std::string base = "enc.block" + std::to_string(s);
        conv(base + ".conv1", oc, ic, k, true);
        conv(base + ".conv2", oc, oc, k, true);
        conv(base + ".skip", oc, ic, 1, true);
        ic = oc;
    }
    const int flat = cfg_.block_channels[2] * bottleneck_h() * bottleneck_w();
    fc("enc.fc1", cfg_.fc_width, flat, true);
    fc("enc.fc2", cfg_.latent_dim, cfg_.fc_width, true);

    fc("dec.fc1", cfg_.fc_width, cfg_.latent_dim, false);
    fc("dec.fc2", flat, cfg_.fc_width, false);
    conv("dec.up0", cfg_.block_channels[1], cfg_.block_channels[2], k, false);
    conv("dec.up1", cfg_.block_channels[0], cfg_.block_channels[1], k, false);
    conv("dec.up2", 1, cfg_.block_channels[0], k, false);
    // Shrink the output head so the initial decode sits near a flat low level
    // instead of spanning the clamp. A wide first output saturates most pixels
    // and the shared downward pull from the live band can drag the whole map
    // below zero, where every gradient vanishes and training freezes.
    for (double& w : params_.find("dec.up2.w")->data) w *= 0.1;
    params_.find("dec.up2.b")->data[0] = 0.1;
}

TensorPtr Autoencoder::encode_t(Tape& tape, const TensorPtr& x) const {
    if (x->ndim() != 3 || x->shape[0] != 1 || x->shape[1] != cfg_.input_h || x->shape[2] != cfg_.input_w)
        throw ValueError("encode expects [1," + std::to_string(cfg_.input_h) + "," +
                         std::to_string(cfg_.input_w) + "], got " + x->shape_str());
    const int pad = (cfg_.kernel - 1) / 2;
    TensorPtr h = x;
    for (int s = 0; s < 3; ++s) {
        const std::string base = "enc.block" + std::to_string(s);
        auto c1 = tape.relu(tape.bias_channels(
            tape.conv2d(h, params_.find(base + ".conv1.w"), 1, pad), params_.find(base + ".conv1.b")));
        auto c2 = tape.bias_channels(tape.conv2d(c1, params_.find(base + ".conv2.w"), 1, pad),
                                     params_.find(base + ".conv2.b"));
        auto skip = tape.conv2d(h, params_.find(base + ".skip.w"), 1, 0);
        h = tape.pool2d(tape.relu(tape.add(c2, skip)), 2);
    }
    const int flat = cfg_.block_channels[2] * bottleneck_h() * bottleneck_w();
    auto v = tape.reshape(h, {flat});
    v = tape.relu(tape.dense(v, params_.find("enc.fc1.w"), params_.find("enc.fc1.b")));
    v = tape.tanh(tape.dense(v, params_.find("enc.fc2.w"), params_.find("enc.fc2.b")));
    return v;
}

TensorPtr Autoencoder::decode_t(Tape& tape, const TensorPtr& v) const {
    if (v->ndim() != 1 || v->shape[0] != cfg_.latent_dim)
        throw ValueError("decode expects [" + std::to_string(cfg_.latent_dim) + "], got " +
                         v->shape_str());
    const int pad = (cfg_.kernel - 1) / 2;
    auto h1 = tape.relu(tape.dense(v, params_.find("dec.fc1.w"), params_.find("dec.fc1.b")));
    auto h2 = tape.relu(tape.dense(h1, params_.find("dec.fc2.w"), params_.find("dec.fc2.b")));
    auto g = tape.reshape(h2, {cfg_.block_channels[2], bottleneck_h(), bottleneck_w()});
    g = tape.relu(tape.bias_channels(
        tape.conv2d(tape.upsample2x(g), params_.find("dec.up0.w"), 1, pad),
        params_.find("dec.up0.b")));
    g = tape.relu(tape.bias_channels(
        tape.conv2d(tape.upsample2x(g), params_.find("dec.up1.w"), 1, pad),
        params_.find("dec.up1.b")));
    g = tape.bias_channels(tape.conv2d(tape.upsample2x(g), params_.find("dec.up2.w"), 1, pad),
                           params_.find("dec.up2.b"));
    return tape.clamp01(g);
}

std::vector<double> Autoencoder::encode(const Field& f) const {
    Tape tape;
    auto v = encode_t(tape, field_to_tensor(f));
    return v->data;
}

Field Autoencoder::decode(const std::vector<double>& latent) const {
    Tape tape;
    auto x = decode_t(tape, Tensor::from({cfg_.latent_dim}, latent));
    Field f;
    f.height = cfg_.input_h;
    f.width = cfg_.input_w;
    f.values = x->data;
    return f;
}

TensorPtr Autoencoder::regularizer_t(Tape& tape) const {
    std::vector<TensorPtr> terms;
    for (const auto& name : encoder_weight_names_)
        terms.push_back(tape.sum_squares(params_.find(name)));
    auto total = tape.add_scalars(terms);
    return tape.scale(total, cfg_.beta / static_cast<double>(encoder_weight_scalars_));
}

void Autoencoder::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json m;
    m["format"] = "dnae-autoencoder/1";
    m["config"] = {{"latent_dim", cfg_.latent_dim},
                   {"block_channels", cfg_.block_channels},
                   {"kernel", cfg_.kernel},
                   {"fc_width", cfg_.fc_width},
                   {"input_h", cfg_.input_h},
                   {"input_w", cfg_.input_w},
                   {"beta", cfg_.beta},
                   {"seed", cfg_.seed}};
    write_text_file(dir / "model.json", m.dump(2) + "\n");
    params_.save(dir / "params");
}

Autoencoder Autoencoder::load(const std::filesystem::path& dir) {
    json m;
    try {
        m = json::parse(read_text_file(dir / "model.json"));
    } catch (const json::exception& e) {
        throw IoError("bad model manifest " + (dir / "model.json").string() + ": " + e.what());
    }
    if (m.value("format", "") != "dnae-autoencoder/1")
        throw IoError("not an autoencoder checkpoint: " + dir.string());
    const auto& c = m.at("config");
    AeConfig cfg;
    cfg.latent_dim = c.at("latent_dim").get<int>();
    cfg.block_channels = c.at("block_channels").get<std::vector<int>>();
    cfg.kernel = c.at("kernel").get<int>();
    cfg.fc_width = c.at("fc_width").get<int>();
    cfg.input_h = c.at("input_h").get<int>();
    cfg.input_w = c.at("input_w").get<int>();
    cfg.beta = c.at("beta").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    Autoencoder ae(cfg);
    ae.params_.load(dir / "params");
    return ae;
}

double ae_loss(const Autoencoder& ae, const std::vector<Field>& batch) {
    if (batch.empty()) throw ValueError("ae_loss on empty batch");
    Tape tape;
    std::vector<TensorPtr> losses;
    for (const auto& f : batch) {
        auto x = field_to_tensor(f);
        auto xhat = ae.decode_t(tape, ae.encode_t(tape, x));
        losses.push_back(tape.mse(xhat, x));
    }
    auto recon = tape.scale(tape.add_scalars(losses), 1.0 / static_cast<double>(batch.size()));
    std::array<TensorPtr, 2> both{recon, ae.regularizer_t(tape)};
    return tape.add_scalars(both)->item();
}

// ---- training ----

namespace {

struct FrameCache {
    std::vector<Field> frames;                 // all frames, trial-major
    std::vector<std::size_t> train_frames;     // indices into `frames`
    std::vector<std::size_t> val_frames;
};

FrameCache load_frames(const Dataset& data, double val_fraction) {
    FrameCache cache;
    const auto split = split_trials(data.trials.size(), val_fraction);
    std::vector<bool> is_val(data.trials.size(), false);
    for (auto i : split.val) is_val[i] = true;
    for (std::size_t trial = 0; trial < data.trials.size(); ++trial) {
        for (std::size_t s = 0; s < data.trials[trial].frames.size(); ++s) {
            cache.frames.push_back(data.load_frame(trial, s));
            const std::size_t idx = cache.frames.size() - 1;
            (is_val[trial] ? cache.val_frames : cache.train_frames).push_back(idx);
        }
    }
    return cache;
}

} // namespace

TrainAeResult train_ae(Autoencoder& ae, const Dataset& data, const AdamConfig& opt,
                       const TrainAeOptions& options) {
    if (data.trials.empty()) throw ValueError("train_ae: dataset has no trials");
    const auto cache = load_frames(data, options.val_fraction);
    if (cache.train_frames.empty() || cache.val_frames.empty())
        throw ValueError("train_ae: split produced an empty side");
    log_info("train_ae: " + std::to_string(cache.train_frames.size()) + " train / " +
             std::to_string(cache.val_frames.size()) + " val frames");

    AdamOptimizer adam(ae.params(), opt);
    Tape tape;
    TrainAeResult result;

    auto val_mse = [&]() {
        double acc = 0.0;
        Tape scratch;
        for (auto idx : cache.val_frames) {
            auto x = field_to_tensor(cache.frames[idx]);
            auto xhat = ae.decode_t(scratch, ae.encode_t(scratch, x));
            acc += scratch.mse(xhat, x)->item();
            scratch.reset();
        }
        return acc / static_cast<double>(cache.val_frames.size());
    };

    std::vector<std::size_t> order = cache.train_frames;
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::stream_seed(options.shuffle_seed, static_cast<std::uint64_t>(epoch)));
        shuffle(order, shuffle_rng);
        const int batch = std::max(1, options.batch_size);
        int n_steps = static_cast<int>((order.size() + batch - 1) / static_cast<std::size_t>(batch));
        if (options.steps_per_epoch > 0) n_steps = std::min(n_steps, options.steps_per_epoch);

        double epoch_loss = 0.0;
        for (int step = 0; step < n_steps; ++step) {
            std::vector<TensorPtr> losses;
            const std::size_t begin = static_cast<std::size_t>(step) * batch;
            const std::size_t end = std::min(order.size(), begin + batch);
            for (std::size_t i = begin; i < end; ++i) {
                auto x = field_to_tensor(cache.frames[order[i]]);
                auto xhat = ae.decode_t(tape, ae.encode_t(tape, x));
                losses.push_back(tape.mse(xhat, x));
            }
            auto recon = tape.scale(tape.add_scalars(losses),
                                    1.0 / static_cast<double>(end - begin));
            std::array<TensorPtr, 2> both{recon, ae.regularizer_t(tape)};
            auto loss = tape.add_scalars(both);
            epoch_loss += loss->item();
            ae.params().zero_grad();
            tape.backward(loss);
            adam.step();
            tape.reset();
        }
        epoch_loss /= n_steps;

        const double vm = val_mse();
        result.history.push_back({epoch, epoch_loss, vm, adam.current_lr()});
        result.final_val_mse = vm;
        log_info("train_ae epoch " + std::to_string(epoch) + ": train " + fmt_double(epoch_loss) +
                 ", val_mse " + fmt_double(vm));
        if (options.target_val_mse > 0.0 && vm < options.target_val_mse) {
            result.reached_target = true;
            break;
        }
    }
    return result;
}

TrajectorySet encode_dataset(const Autoencoder& ae, const Dataset& data, double val_fraction) {
    TrajectorySet set;
    set.latent_dim = ae.config().latent_dim;
    const auto split = split_trials(data.trials.size(), val_fraction);
    std::vector<bool> is_val(data.trials.size(), false);
    for (auto i : split.val) is_val[i] = true;
    Tape tape;
    for (std::size_t trial = 0; trial < data.trials.size(); ++trial) {
        const auto& rec = data.trials[trial];
        Trajectory tr;
        tr.trial_id = rec.trial_id;
        tr.xi = rec.xi;
        tr.outcome = rec.outcome;
        tr.split = is_val[trial] ? "val" : "train";
        tr.times_us = rec.times_us;
        tr.states.reserve(rec.frames.size() * static_cast<std::size_t>(set.latent_dim));
        for (std::size_t s = 0; s < rec.frames.size(); ++s) {
            auto x = field_to_tensor(data.load_frame(trial, s));
            auto v = ae.encode_t(tape, x);
            tr.states.insert(tr.states.end(), v->data.begin(), v->data.end());
            tape.reset();
        }
        set.items.push_back(std::move(tr));
    }
    return set;
}

} // namespace dnae
