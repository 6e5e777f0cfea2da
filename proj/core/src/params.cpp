#include "dnae/params.hpp"

#include <cmath>

#include "dnae/errors.hpp"
#include "dnae/serialize.hpp"

#include <nlohmann/json.hpp>

namespace dnae {

using json = nlohmann::json;

TensorPtr NetworkParams::add(const std::string& name, std::vector<int> shape) {
    if (contains(name)) throw StateError("duplicate parameter name: " + name);
    auto t = Tensor::make(std::move(shape), /*requires_grad=*/true);
    items_.emplace_back(name, t);
    return t;
}

TensorPtr NetworkParams::find(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw StateError("unknown parameter: " + name);
}

bool NetworkParams::contains(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return true;
    return false;
}

std::int64_t NetworkParams::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items_) n += t->size();
    return n;
}

void NetworkParams::zero_grad() {
    for (auto& [name, t] : items_) {
        t->ensure_grad();
        t->zero_grad();
    }
}

void NetworkParams::export_grad(std::vector<double>& flat) const {
    flat.resize(static_cast<std::size_t>(scalar_count()));
    std::size_t off = 0;
    for (const auto& [name, t] : items_) {
        if (t->grad.size() != t->data.size())
            throw StateError("parameter " + name + " has no gradient to export");
        std::copy(t->grad.begin(), t->grad.end(), flat.begin() + static_cast<std::ptrdiff_t>(off));
        off += t->grad.size();
    }
}

void NetworkParams::set_grad(const std::vector<double>& flat) {
    if (flat.size() != static_cast<std::size_t>(scalar_count()))
        throw ValueError("flat gradient size mismatch");
    std::size_t off = 0;
    for (auto& [name, t] : items_) {
        t->ensure_grad();
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t->grad.size()), t->grad.begin());
        off += t->grad.size();
    }
}

void NetworkParams::export_values(std::vector<double>& flat) const {
    flat.resize(static_cast<std::size_t>(scalar_count()));
    std::size_t off = 0;
    for (const auto& [name, t] : items_) {
        std::copy(t->data.begin(), t->data.end(), flat.begin() + static_cast<std::ptrdiff_t>(off));
        off += t->data.size();
    }
}

void NetworkParams::set_values(const std::vector<double>& flat) {
    if (flat.size() != static_cast<std::size_t>(scalar_count()))
        throw ValueError("flat value size mismatch");
    std::size_t off = 0;
    for (auto& [name, t] : items_) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t->data.size()), t->data.begin());
        off += t->data.size();
    }
}

void NetworkParams::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "dnae-params/1";
    json list = json::array();
    for (const auto& [name, t] : items_) {
        const std::string file = name + ".dnt";
        write_tensor(dir / file, *t);
        list.push_back({{"name", name}, {"shape", t->shape}, {"file", file}});
    }
    manifest["tensors"] = list;
    write_text_file(dir / "params.json", manifest.dump(2) + "\n");
}

void NetworkParams::load(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(dir / "params.json"));
    } catch (const json::exception& e) {
        throw IoError("bad params manifest " + (dir / "params.json").string() + ": " + e.what());
    }
    if (manifest.value("format", "") != "dnae-params/1")
        throw IoError("unexpected params format in " + (dir / "params.json").string());
    const auto& list = manifest.at("tensors");
    if (list.size() != items_.size())
        throw IoError("parameter count mismatch in " + dir.string() + ": have " +
                      std::to_string(items_.size()) + ", file lists " + std::to_string(list.size()));
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const auto& entry = list[i];
        const std::string name = entry.at("name").get<std::string>();
        if (name != items_[i].first)
            throw IoError("parameter order mismatch at index " + std::to_string(i) + ": expected " +
                          items_[i].first + ", found " + name);
        auto t = read_tensor(dir / entry.at("file").get<std::string>());
        if (t->shape != items_[i].second->shape)
            throw IoError("shape mismatch for parameter " + name + ": expected " +
                          items_[i].second->shape_str() + ", found " + t->shape_str());
        items_[i].second->data = std::move(t->data);
    }
}

void init_he_uniform(Tensor& t, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

void init_uniform(Tensor& t, double lo, double hi, Rng& rng) {
    for (auto& v : t.data) v = rng.uniform(lo, hi);
}

AdamConfig AdamConfig::scaled_to(long max_iters) {
    AdamConfig cfg;
    cfg.max_iters = max_iters;
    cfg.schedule = {{max_iters / 2, 1e-4}, {(max_iters * 3) / 4, 1e-5}};
    return cfg;
}

AdamOptimizer::AdamOptimizer(NetworkParams& params, AdamConfig cfg)
    : params_(params), cfg_(cfg) {
    const std::size_t n = static_cast<std::size_t>(params.scalar_count());
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
}

void AdamOptimizer::step() {
    ++t_;
    const double lr = cfg_.lr_at(t_);
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    std::size_t off = 0;
    for (auto& [name, t] : params_.items()) {
        if (t->grad.size() != t->data.size())
            throw StateError("step() before any backward pass: parameter " + name +
                             " has no gradient");
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            const double g = t->grad[i];
            double& m = m_[off + i];
            double& v = v_[off + i];
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            t->data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        off += t->data.size();
    }
}

} // namespace dnae
