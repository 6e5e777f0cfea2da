#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written the slow, obvious way and shares no
// code with core/.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dnae/tensor.hpp"

namespace oracle {

// ---- finite-difference gradient checking ----

/// Builds a scalar loss from `inputs` on the given tape. Must be a pure
/// function of the input values (fresh tape per call).
using GraphFn =
    std::function<dnae::TensorPtr(dnae::Tape&, const std::vector<dnae::TensorPtr>&)>;

struct GradCheck {
    double max_rel_err = 0.0;
    long checked = 0;
    int worst_tensor = -1;
    std::int64_t worst_entry = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central-difference check of d(loss)/d(inputs). Relative error per entry is
/// |a - n| / max(1, |a|, |n|). When subset_cap > 0, at most that many entries
/// per tensor are probed on a deterministic stride that always includes the
/// first and last entry. `skip(tensor, entry)` excludes entries (e.g. values
/// sitting on an activation kink).
GradCheck fd_gradcheck(const GraphFn& f, const std::vector<dnae::TensorPtr>& inputs,
                       double h = 1e-6, int subset_cap = 0,
                       const std::function<bool(int, std::int64_t)>& skip = nullptr);

// ---- trajectory metrics ----

/// Discrete Fréchet by explicit depth-first enumeration of every monotone
/// coupling; exponential, fine for <= 6 points. Points row-major [n x dim].
double brute_frechet(const std::vector<double>& a, const std::vector<double>& b, int dim);

/// Position + curvature trajectory loss, scalar re-derivation: pred/truth are
/// [T x dim] on a shared `times` grid, summed over `n` such pairs by the
/// caller. Central differences use the local two-sided step.
double scalar_traj_loss(const std::vector<std::vector<double>>& pred,
                        const std::vector<std::vector<double>>& truth,
                        const std::vector<double>& times, int dim, double lambda);

// ---- linear systems ----

/// exp(A*t) for a row-major 2x2 A, by scaling-and-squaring a Taylor series.
std::array<double, 4> expm2(const std::array<double, 4>& a, double t);

// ---- geometry ----

/// Fraction of the axis-aligned box prod_i [lo_i, hi_i] where dot(a, x) <= b,
/// via the inclusion-exclusion vertex formula on the unit cube.
double halfspace_box_fraction(std::vector<double> a, double b, const std::vector<double>& lo,
                              const std::vector<double>& hi);

/// Scalar root of a monotone function by bisection; f(lo) and f(hi) must
/// bracket zero.
double bisect(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12);

// ---- small statistics ----

double median(std::vector<double> v);

// ---- filesystem ----

/// Whole-file byte comparison.
bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b);

/// Recursive comparison of two directories: same relative file set, every
/// file byte-identical. On mismatch returns the offending relative path.
bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b,
               std::string* first_diff = nullptr);

} // namespace oracle
