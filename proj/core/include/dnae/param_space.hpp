#pragma once

#include <array>
#include <string>

#include "dnae/rng.hpp"

namespace dnae {

inline constexpr int kParamCount = 15;

/// One operating-condition parameter. Uniform components are supported on
/// [a,b]; normal components have mean a, variance b and are truncated to
/// +/- 3 sigma, which is also their support for validation and scaling.
struct ParamSpec {
    const char* name;
    const char* unit;
    bool is_normal;
    double a, b;

    double lo() const;
    double hi() const;
    double mid() const { return 0.5 * (lo() + hi()); }
    double half_range() const { return 0.5 * (hi() - lo()); }
};

const std::array<ParamSpec, kParamCount>& param_table();

/// A point in the 15-dimensional operating-condition space.
struct ParamVector {
    std::array<double, kParamCount> xi{};

    double& operator[](int i) { return xi[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return xi[static_cast<std::size_t>(i)]; }
};

/// Affine map of component i onto [-1,1] over its support (and back).
double standardize_component(int i, double value);
double unstandardize_component(int i, double value);
std::array<double, kParamCount> standardize(const ParamVector& p);

/// Throws ValueError naming the first out-of-support component.
void validate(const ParamVector& p);
bool in_support(const ParamVector& p);

/// One independent draw from the prior.
ParamVector sample_xi(Rng& rng);

} // namespace dnae
