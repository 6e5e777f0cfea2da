#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dnae/rng.hpp"
#include "dnae/tensor.hpp"

namespace dnae {

/// Ordered, named collection of trainable tensors. Order is the canonical
/// flattening used by the optimizer state and by deterministic gradient
/// reduction, so it must not depend on map iteration or load order quirks.
class NetworkParams {
public:
    TensorPtr add(const std::string& name, std::vector<int> shape);
    TensorPtr find(const std::string& name) const;              // throws StateError if absent
    bool contains(const std::string& name) const;

    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    std::size_t tensor_count() const { return items_.size(); }
    std::int64_t scalar_count() const;

    void zero_grad();

    /// Copy all gradients into / out of a flat buffer (canonical order).
    void export_grad(std::vector<double>& flat) const;
    void set_grad(const std::vector<double>& flat);
    void export_values(std::vector<double>& flat) const;
    void set_values(const std::vector<double>& flat);

    void save(const std::filesystem::path& dir) const;   // one DNT1 file per tensor + params.json
    void load(const std::filesystem::path& dir);         // shapes must match exactly

private:
    std::vector<std::pair<std::string, TensorPtr>> items_;
};

/// He-uniform fan-in init for conv kernels and dense weights.
void init_he_uniform(Tensor& t, int fan_in, Rng& rng);
void init_uniform(Tensor& t, double lo, double hi, Rng& rng);

struct AdamConfig {
    double lr0 = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long max_iters = 200000;
    /// (iteration, new_lr) pairs: lr drops once the step counter passes each
    /// boundary. Default mirrors a 200k-iteration run with /10 drops.
    std::vector<std::pair<long, double>> schedule{{100000, 1e-4}, {150000, 1e-5}};

    double lr_at(long iter) const {
        double lr = lr0;
        for (const auto& [at, value] : schedule)
            if (iter > at) lr = value;
        return lr;
    }

    /// Same drop shape compressed into a smaller budget.
    static AdamConfig scaled_to(long max_iters);
};

/// Adam with bias correction, stepped against NetworkParams gradients.
class AdamOptimizer {
public:
    AdamOptimizer(NetworkParams& params, AdamConfig cfg);

    /// Apply one update from the currently stored gradients.
    void step();
    long iteration() const { return t_; }
    double current_lr() const { return cfg_.lr_at(t_); }
    const AdamConfig& config() const { return cfg_; }

private:
    NetworkParams& params_;
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

} // namespace dnae
