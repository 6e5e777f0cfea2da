#include "dnae/field.hpp"

#include <algorithm>

#include "dnae/errors.hpp"

namespace dnae {

Field Field::zeros(int height, int width) {
    if (height < 1 || width < 1)
        throw ValueError("field dims must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    Field f;
    f.height = height;
    f.width = width;
    f.values.assign(static_cast<std::size_t>(height) * width, 0.0);
    return f;
}

Field normalize(const Field& raw, double min_value, double max_value) {
    if (!(max_value > min_value))
        throw ValueError("normalize: max must exceed min, got [" + std::to_string(min_value) + "," +
                         std::to_string(max_value) + "]");
    Field out = raw;
    const double inv = 1.0 / (max_value - min_value);
    for (auto& v : out.values)
        v = std::clamp((v - min_value) * inv, 0.0, 1.0);
    out.norm_min = min_value;
    out.norm_max = max_value;
    return out;
}

Field denormalize(const Field& normalized) {
    Field out = normalized;
    const double span = normalized.norm_max - normalized.norm_min;
    for (auto& v : out.values) v = normalized.norm_min + v * span;
    out.norm_min = 0.0;
    out.norm_max = 1.0;
    return out;
}

TensorPtr field_to_tensor(const Field& f) {
    return Tensor::from({1, f.height, f.width}, f.values);
}

Field tensor_to_field(const Tensor& t, double norm_min, double norm_max) {
    if (t.ndim() == 3 && t.shape[0] != 1)
        throw ValueError("tensor_to_field expects a single channel, got " + t.shape_str());
    if (t.ndim() != 2 && t.ndim() != 3)
        throw ValueError("tensor_to_field expects [H,W] or [1,H,W], got " + t.shape_str());
    Field f;
    f.height = t.shape[t.ndim() - 2];
    f.width = t.shape[t.ndim() - 1];
    f.values = t.data;
    f.norm_min = norm_min;
    f.norm_max = norm_max;
    return f;
}

} // namespace dnae
