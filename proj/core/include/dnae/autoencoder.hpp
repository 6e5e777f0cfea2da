#pragma once

#include <filesystem>
#include <vector>

#include "dnae/dataset.hpp"
#include "dnae/field.hpp"
#include "dnae/params.hpp"
#include "dnae/tensor.hpp"
#include "dnae/trajectory.hpp"

namespace dnae {

/// Convolutional autoencoder mapping a [1,H,W] field in [0,1] to an
/// N_l-dimensional latent vector bounded to (-1,1) by a tanh head.
/// Three residual conv blocks, each followed by 2x2 average pooling, then a
/// two-layer dense head; the decoder mirrors with nearest-neighbour
/// upsampling and ends in a clamp to [0,1].
struct AeConfig {
    int latent_dim = 8;
    std::vector<int> block_channels{16, 32, 64};
    int kernel = 3;
    int fc_width = 64;
    int input_h = 96;
    int input_w = 48;
    double beta = 1e-6;      // encoder weight-decay term in ae_loss
    std::uint64_t seed = 42;
};

class Autoencoder {
public:
    explicit Autoencoder(AeConfig cfg);

    const AeConfig& config() const { return cfg_; }
    NetworkParams& params() { return params_; }
    const NetworkParams& params() const { return params_; }

    /// Taped forward passes (differentiable when inputs/params require grad).
    TensorPtr encode_t(Tape& tape, const TensorPtr& x) const;
    TensorPtr decode_t(Tape& tape, const TensorPtr& v) const;

    /// Convenience plain passes (forward only).
    std::vector<double> encode(const Field& f) const;
    Field decode(const std::vector<double>& latent) const;

    /// Mean of the squared encoder weights' sum: beta * sum(w^2)/N_e over
    /// conv/dense weight tensors of the encoder (biases excluded).
    TensorPtr regularizer_t(Tape& tape) const;

    void save(const std::filesystem::path& dir) const;
    static Autoencoder load(const std::filesystem::path& dir);

    /// Spatial dims after the three pooling stages.
    int bottleneck_h() const { return cfg_.input_h / 8; }
    int bottleneck_w() const { return cfg_.input_w / 8; }

private:
    AeConfig cfg_;
    NetworkParams params_;
    std::vector<std::string> encoder_weight_names_;
    std::int64_t encoder_weight_scalars_ = 0;

    void build();
};

/// Batch loss: mean per-pixel reconstruction MSE plus the weight penalty.
double ae_loss(const Autoencoder& ae, const std::vector<Field>& batch);

struct TrainAeOptions {
    int max_epochs = 40;
    int batch_size = 16;
    double val_fraction = 0.1;
    double target_val_mse = 0.0;    // stop early when held-out MSE drops below (0 = run all epochs)
    int steps_per_epoch = 0;        // 0 = full pass over the training frames
    std::uint64_t shuffle_seed = 7;
};

struct AeEpochStats {
    int epoch;
    double train_loss;
    double val_mse;
    double lr;
};

struct TrainAeResult {
    std::vector<AeEpochStats> history;
    double final_val_mse = 0.0;
    bool reached_target = false;
};

TrainAeResult train_ae(Autoencoder& ae, const Dataset& data, const AdamConfig& opt,
                       const TrainAeOptions& options);

/// Encode every frame of every trial; split tags follow split_trials(n, 0.1).
TrajectorySet encode_dataset(const Autoencoder& ae, const Dataset& data, double val_fraction = 0.1);

} // namespace dnae
