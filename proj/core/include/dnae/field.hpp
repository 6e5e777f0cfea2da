#pragma once

#include <vector>

#include "dnae/tensor.hpp"

namespace dnae {

/// 2-D scalar field (row-major, height x width). `values` are either raw
/// sensor units or normalized to [0,1]; norm_min/norm_max record the affine
/// map that was applied so raw units can be recovered.
struct Field {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    double norm_min = 0.0;
    double norm_max = 1.0;

    static Field zeros(int height, int width);
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * width + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * width + j]; }
    std::size_t size() const { return values.size(); }
};

/// Map raw values into [0,1] with the given bounds, clamping anything outside.
Field normalize(const Field& raw, double min_value, double max_value);

/// Invert `normalize` using the bounds stored on the field.
Field denormalize(const Field& normalized);

/// View a field as a [1,H,W] tensor (copy).
TensorPtr field_to_tensor(const Field& f);
Field tensor_to_field(const Tensor& t, double norm_min = 0.0, double norm_max = 1.0);

} // namespace dnae
