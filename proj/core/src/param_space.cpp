#include "dnae/param_space.hpp"

#include <cmath>
#include <sstream>

#include "dnae/errors.hpp"

namespace dnae {

// Operating-condition priors: laser-delivery geometry and energetics first,
// then chamber/feed conditions. Normal entries store (mean, variance).
const std::array<ParamSpec, kParamCount>& param_table() {
    static const std::array<ParamSpec, kParamCount> table = {{
        {"focus_x", "mm", true, 0.29, 0.04},
        {"focus_y", "mm", true, -0.54, 0.20},
        {"pulse_width", "ns", false, 1.1, 2.1},
        {"beam_quality", "-", false, 2.0, 2.5},
        {"spot_diameter", "mm", false, 1.44, 2.16},
        {"pulse_energy", "mJ", false, 20.0, 54.0},
        {"trigger_delay", "us", false, 0.0, 284.0},
        {"charge_mass", "mg", false, 5.0, 7.0},
        {"mixture_ratio", "-", false, 0.5, 0.60},
        {"wall_conductance", "-", false, 0.0098, 0.011},
        {"pressure_coeff", "-", false, 3.4e9, 3.8e9},
        {"swirl_ratio", "-", false, 0.15, 0.17},
        {"fuel_flow", "g/s", false, 6.12, 6.83},
        {"oxidizer_flow", "g/s", false, 1.97, 2.17},
        {"film_fraction", "-", false, 0.65, 0.97},
    }};
    return table;
}

double ParamSpec::lo() const { return is_normal ? a - 3.0 * std::sqrt(b) : a; }
double ParamSpec::hi() const { return is_normal ? a + 3.0 * std::sqrt(b) : b; }

double standardize_component(int i, double value) {
    const auto& spec = param_table()[static_cast<std::size_t>(i)];
    return (value - spec.mid()) / spec.half_range();
}

double unstandardize_component(int i, double value) {
    const auto& spec = param_table()[static_cast<std::size_t>(i)];
    return spec.mid() + value * spec.half_range();
}

std::array<double, kParamCount> standardize(const ParamVector& p) {
    std::array<double, kParamCount> out{};
    for (int i = 0; i < kParamCount; ++i) out[static_cast<std::size_t>(i)] = standardize_component(i, p[i]);
    return out;
}

void validate(const ParamVector& p) {
    for (int i = 0; i < kParamCount; ++i) {
        const auto& spec = param_table()[static_cast<std::size_t>(i)];
        const double v = p[i];
        if (std::isfinite(v) && v >= spec.lo() && v <= spec.hi()) continue;
        std::ostringstream os;
        os << "parameter " << i << " (" << spec.name << ") = " << v << " outside support ["
           << spec.lo() << ", " << spec.hi() << "] " << spec.unit;
        throw ValueError(os.str());
    }
}

bool in_support(const ParamVector& p) {
    for (int i = 0; i < kParamCount; ++i) {
        const auto& spec = param_table()[static_cast<std::size_t>(i)];
        if (!(std::isfinite(p[i]) && p[i] >= spec.lo() && p[i] <= spec.hi())) return false;
    }
    return true;
}

ParamVector sample_xi(Rng& rng) {
    ParamVector p;
    for (int i = 0; i < kParamCount; ++i) {
        const auto& spec = param_table()[static_cast<std::size_t>(i)];
        p[i] = spec.is_normal ? rng.truncated_normal(spec.a, std::sqrt(spec.b))
                              : rng.uniform(spec.a, spec.b);
    }
    return p;
}

} // namespace dnae
