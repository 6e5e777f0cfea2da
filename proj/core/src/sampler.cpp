#include "dnae/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dnae/errors.hpp"
#include "dnae/logging.hpp"
#include "dnae/rng.hpp"
#include "dnae/serialize.hpp"
#include "dnae/threading.hpp"

namespace dnae {

EnsembleBounds EnsembleBounds::from(const std::vector<ParamVector>& ensemble) {
    if (ensemble.empty()) throw ValueError("ensemble bounds need at least one member");
    EnsembleBounds b;
    for (int i = 0; i < kParamCount; ++i) {
        b.lo[static_cast<std::size_t>(i)] = ensemble[0][i];
        b.hi[static_cast<std::size_t>(i)] = ensemble[0][i];
    }
    for (const auto& xi : ensemble)
        for (int i = 0; i < kParamCount; ++i) {
            b.lo[static_cast<std::size_t>(i)] = std::min(b.lo[static_cast<std::size_t>(i)], xi[i]);
            b.hi[static_cast<std::size_t>(i)] = std::max(b.hi[static_cast<std::size_t>(i)], xi[i]);
        }
    return b;
}

bool constrain_sample(const ParamVector& xi, const EnsembleBounds& bounds) {
    for (int i = 0; i < kParamCount; ++i)
        if (xi[i] < bounds.lo[static_cast<std::size_t>(i)] ||
            xi[i] > bounds.hi[static_cast<std::size_t>(i)])
            return false;
    return true;
}

namespace {

// in-place lower-triangular Cholesky of a dense SPD matrix
void cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (d <= 0.0)
            throw ValueError("RBF system is not positive definite (row " + std::to_string(j) +
                             "); increase ridge");
        const double ljj = std::sqrt(d);
        a[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / ljj;
        }
    }
}

void cholesky_solve(const std::vector<double>& l, std::size_t n, double* x) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * x[k];
        x[i] = s / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * x[k];
        x[ii] = s / l[ii * n + ii];
    }
}

double sq_distance(const std::array<double, kParamCount>& a,
                   const std::array<double, kParamCount>& b) {
    double s = 0.0;
    for (int i = 0; i < kParamCount; ++i) {
        const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
        s += d * d;
    }
    return s;
}

} // namespace

RbfModel RbfModel::fit(const std::vector<ParamVector>& xis,
                       const std::vector<std::vector<double>>& v0, double length_scale,
                       double ridge) {
    if (xis.empty() || xis.size() != v0.size())
        throw ValueError("fit_rbf: need matching nonempty center/value lists");
    if (ridge <= 0.0) throw ValueError("fit_rbf: ridge must be positive");
    const std::size_t n = xis.size();
    const int L = static_cast<int>(v0[0].size());
    if (L < 1) throw ValueError("fit_rbf: empty latent values");

    RbfModel m;
    m.latent_dim_ = L;
    m.ridge_ = ridge;
    m.bounds_ = EnsembleBounds::from(xis);
    m.centers_.resize(n);
    m.values_.assign(n * static_cast<std::size_t>(L), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (v0[i].size() != static_cast<std::size_t>(L))
            throw ValueError("fit_rbf: value " + std::to_string(i) + " has latent dim " +
                             std::to_string(v0[i].size()) + ", expected " + std::to_string(L));
        m.centers_[i] = standardize(xis[i]);
        std::copy(v0[i].begin(), v0[i].end(),
                  m.values_.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(L)));
    }

    // duplicate centers are tolerable only when their values agree; a center
    // counts as distinct when no earlier center coincides with it
    constexpr double kDupSq = 1e-24;
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool repeat = false;
        for (std::size_t j = 0; j < i; ++j) {
            if (sq_distance(m.centers_[i], m.centers_[j]) > kDupSq) continue;
            repeat = true;
            for (int c = 0; c < L; ++c)
                if (m.values_[i * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)] !=
                    m.values_[j * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)])
                    throw ValueError("fit_rbf: duplicate centers " + std::to_string(j) + " and " +
                                     std::to_string(i) + " carry conflicting values");
        }
        if (!repeat) ++distinct;
    }

    if (distinct <= 1 || n == 1) {
        m.constant_ = true;
        m.length_scale_ = length_scale > 0.0 ? length_scale : 1.0;
        m.weights_ = m.values_;
        log_info("fit_rbf: single distinct center, constant predictor");
        return m;
    }

    if (length_scale > 0.0) {
        m.length_scale_ = length_scale;
    } else {
        std::vector<double> dist;
        dist.reserve(n * (n - 1) / 2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                dist.push_back(std::sqrt(sq_distance(m.centers_[i], m.centers_[j])));
        std::sort(dist.begin(), dist.end());
        const std::size_t mid = dist.size() / 2;
        double med = dist.size() % 2 ? dist[mid] : 0.5 * (dist[mid - 1] + dist[mid]);
        if (med <= 0.0) med = 1.0;
        m.length_scale_ = med;
    }

    const double inv2l2 = 1.0 / (2.0 * m.length_scale_ * m.length_scale_);
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        k[i * n + i] = 1.0 + ridge;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = std::exp(-sq_distance(m.centers_[i], m.centers_[j]) * inv2l2);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    cholesky(k, n);
    m.weights_.assign(n * static_cast<std::size_t>(L), 0.0);
    std::vector<double> rhs(n);
    for (int c = 0; c < L; ++c) {
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = m.values_[i * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)];
        cholesky_solve(k, n, rhs.data());
        for (std::size_t i = 0; i < n; ++i)
            m.weights_[i * static_cast<std::size_t>(L) + static_cast<std::size_t>(c)] = rhs[i];
    }
    return m;
}

void RbfModel::eval_std(const double* xi_std, double* out) const {
    const std::size_t L = static_cast<std::size_t>(latent_dim_);
    if (constant_) {
        std::copy(values_.begin(), values_.begin() + static_cast<std::ptrdiff_t>(L), out);
        return;
    }
    std::fill(out, out + L, 0.0);
    const double inv2l2 = 1.0 / (2.0 * length_scale_ * length_scale_);
    for (std::size_t i = 0; i < centers_.size(); ++i) {
        double r2 = 0.0;
        for (int d = 0; d < kParamCount; ++d) {
            const double diff = xi_std[d] - centers_[i][static_cast<std::size_t>(d)];
            r2 += diff * diff;
        }
        const double kv = std::exp(-r2 * inv2l2);
        const double* w = weights_.data() + i * L;
        for (std::size_t c = 0; c < L; ++c) out[c] += kv * w[c];
    }
}

std::vector<double> RbfModel::eval(const ParamVector& xi) const {
    const auto s = standardize(xi);
    std::vector<double> out(static_cast<std::size_t>(latent_dim_));
    eval_std(s.data(), out.data());
    return out;
}

void RbfModel::save(const std::filesystem::path& file) const {
    nlohmann::json j;
    j["format"] = "dnae-rbf/1";
    j["latent_dim"] = latent_dim_;
    j["length_scale"] = length_scale_;
    j["ridge"] = ridge_;
    j["constant"] = constant_;
    j["bounds"]["lo"] = bounds_.lo;
    j["bounds"]["hi"] = bounds_.hi;
    j["centers"] = centers_;
    j["values"] = values_;
    j["weights"] = weights_;
    write_text_file(file, j.dump(2) + "\n");
}

RbfModel RbfModel::load(const std::filesystem::path& file) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(file));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("rbf model " + file.string() + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "dnae-rbf/1")
        throw IoError("rbf model " + file.string() + ": unrecognized format");
    RbfModel m;
    try {
        m.latent_dim_ = j.at("latent_dim").get<int>();
        m.length_scale_ = j.at("length_scale").get<double>();
        m.ridge_ = j.at("ridge").get<double>();
        m.constant_ = j.at("constant").get<bool>();
        m.bounds_.lo = j.at("bounds").at("lo").get<std::array<double, kParamCount>>();
        m.bounds_.hi = j.at("bounds").at("hi").get<std::array<double, kParamCount>>();
        m.centers_ = j.at("centers").get<std::vector<std::array<double, kParamCount>>>();
        m.values_ = j.at("values").get<std::vector<double>>();
        m.weights_ = j.at("weights").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("rbf model " + file.string() + ": " + e.what());
    }
    const std::size_t want = m.centers_.size() * static_cast<std::size_t>(m.latent_dim_);
    if (m.latent_dim_ < 1 || m.centers_.empty() || m.values_.size() != want ||
        m.weights_.size() != want || m.length_scale_ <= 0.0)
        throw IoError("rbf model " + file.string() + ": inconsistent dimensions");
    return m;
}

MapAccumulator::MapAccumulator(int axis_a, int axis_b, int bins_a, int bins_b, double lo_a,
                               double hi_a, double lo_b, double hi_b) {
    if (axis_a == axis_b) throw ValueError("probability map axes must be distinct");
    if (axis_a < 0 || axis_a >= kParamCount || axis_b < 0 || axis_b >= kParamCount)
        throw ValueError("probability map axis outside parameter vector");
    if (bins_a < 1 || bins_b < 1) throw ValueError("probability map needs at least one bin");
    if (!(hi_a > lo_a) || !(hi_b > lo_b)) throw ValueError("probability map range is degenerate");
    map_.axis_a = axis_a;
    map_.axis_b = axis_b;
    map_.edges_a.resize(static_cast<std::size_t>(bins_a) + 1);
    map_.edges_b.resize(static_cast<std::size_t>(bins_b) + 1);
    for (int i = 0; i <= bins_a; ++i)
        map_.edges_a[static_cast<std::size_t>(i)] = lo_a + (hi_a - lo_a) * i / bins_a;
    for (int i = 0; i <= bins_b; ++i)
        map_.edges_b[static_cast<std::size_t>(i)] = lo_b + (hi_b - lo_b) * i / bins_b;
    map_.counts_success.assign(static_cast<std::size_t>(bins_a) * bins_b, 0);
    map_.counts_total.assign(static_cast<std::size_t>(bins_a) * bins_b, 0);
}

void MapAccumulator::add(const ParamVector& xi, bool success) {
    const int na = map_.bins_a(), nb = map_.bins_b();
    const double a = xi[map_.axis_a], b = xi[map_.axis_b];
    const double lo_a = map_.edges_a.front(), hi_a = map_.edges_a.back();
    const double lo_b = map_.edges_b.front(), hi_b = map_.edges_b.back();
    if (a < lo_a || a > hi_a || b < lo_b || b > hi_b) return;   // outside the mapped window
    int ia = static_cast<int>((a - lo_a) / (hi_a - lo_a) * na);
    int ib = static_cast<int>((b - lo_b) / (hi_b - lo_b) * nb);
    ia = std::clamp(ia, 0, na - 1);
    ib = std::clamp(ib, 0, nb - 1);
    const std::size_t cell = static_cast<std::size_t>(ia) * nb + static_cast<std::size_t>(ib);
    ++map_.counts_total[cell];
    if (success) ++map_.counts_success[cell];
}

namespace {

constexpr double kNoData = std::numeric_limits<double>::quiet_NaN();

void fill_p_hat(ProbabilityMap& m) {
    const std::size_t n = m.counts_total.size();
    m.p_hat.assign(n, kNoData);
    for (std::size_t i = 0; i < n; ++i)
        if (m.counts_total[i] > 0)
            m.p_hat[i] = static_cast<double>(m.counts_success[i]) / m.counts_total[i];
}

// 3x3 box average over cells that carry data; no-data cells stay masked
void fill_p_smooth(ProbabilityMap& m) {
    const int na = m.bins_a(), nb = m.bins_b();
    m.p_smooth.assign(m.p_hat.size(), kNoData);
    for (int ia = 0; ia < na; ++ia)
        for (int ib = 0; ib < nb; ++ib) {
            const std::size_t cell = static_cast<std::size_t>(ia) * nb + ib;
            if (std::isnan(m.p_hat[cell])) continue;
            double sum = 0.0;
            int cnt = 0;
            for (int da = -1; da <= 1; ++da)
                for (int db = -1; db <= 1; ++db) {
                    const int ja = ia + da, jb = ib + db;
                    if (ja < 0 || ja >= na || jb < 0 || jb >= nb) continue;
                    const double v = m.p_hat[static_cast<std::size_t>(ja) * nb + jb];
                    if (std::isnan(v)) continue;
                    sum += v;
                    ++cnt;
                }
            m.p_smooth[cell] = sum / cnt;
        }
}

struct Segment {
    std::array<double, 2> p0, q;
};

using Point = std::pair<double, double>;

void marching_squares(const ProbabilityMap& m, double level, std::vector<Segment>& segs) {
    const int na = m.bins_a(), nb = m.bins_b();
    auto val = [&](int ia, int ib) { return m.p_smooth[static_cast<std::size_t>(ia) * nb + ib]; };
    for (int ia = 0; ia + 1 < na; ++ia)
        for (int ib = 0; ib + 1 < nb; ++ib) {
            const double v0 = val(ia, ib), v1 = val(ia + 1, ib);
            const double v2 = val(ia + 1, ib + 1), v3 = val(ia, ib + 1);
            if (std::isnan(v0) || std::isnan(v1) || std::isnan(v2) || std::isnan(v3)) continue;
            const int idx = (v0 > level ? 1 : 0) | (v1 > level ? 2 : 0) | (v2 > level ? 4 : 0) |
                            (v3 > level ? 8 : 0);
            if (idx == 0 || idx == 15) continue;
            const double x0 = m.center_a(ia), x1 = m.center_a(ia + 1);
            const double y0 = m.center_b(ib), y1 = m.center_b(ib + 1);
            auto lerp = [level](double a, double b, double pa, double pb) {
                return pa + (level - a) / (b - a) * (pb - pa);
            };
            const std::array<double, 2> bot{lerp(v0, v1, x0, x1), y0};
            const std::array<double, 2> rgt{x1, lerp(v1, v2, y0, y1)};
            const std::array<double, 2> top{lerp(v3, v2, x0, x1), y1};
            const std::array<double, 2> lft{x0, lerp(v0, v3, y0, y1)};
            auto emit = [&](std::array<double, 2> a, std::array<double, 2> b) {
                if (a != b) segs.push_back({a, b});
            };
            switch (idx) {
                case 1: emit(lft, bot); break;
                case 2: emit(bot, rgt); break;
                case 3: emit(lft, rgt); break;
                case 4: emit(rgt, top); break;
                case 5:
                    if (0.25 * (v0 + v1 + v2 + v3) > level) {
                        emit(lft, top);
                        emit(bot, rgt);
                    } else {
                        emit(lft, bot);
                        emit(rgt, top);
                    }
                    break;
                case 6: emit(bot, top); break;
                case 7: emit(lft, top); break;
                case 8: emit(lft, top); break;
                case 9: emit(bot, top); break;
                case 10:
                    if (0.25 * (v0 + v1 + v2 + v3) > level) {
                        emit(lft, bot);
                        emit(rgt, top);
                    } else {
                        emit(lft, top);
                        emit(bot, rgt);
                    }
                    break;
                case 11: emit(rgt, top); break;
                case 12: emit(lft, rgt); break;
                case 13: emit(bot, rgt); break;
                case 14: emit(lft, bot); break;
                default: break;
            }
        }
}

// links shared-endpoint segments into polylines; deterministic by segment order
std::vector<ContourLine> chain_segments(const std::vector<Segment>& segs, double level) {
    std::map<Point, std::vector<std::size_t>> ends;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        ends[{segs[i].p0[0], segs[i].p0[1]}].push_back(i);
        ends[{segs[i].q[0], segs[i].q[1]}].push_back(i);
    }
    std::vector<bool> used(segs.size(), false);
    std::vector<ContourLine> lines;
    auto next_at = [&](const std::array<double, 2>& p, std::size_t self) -> std::size_t {
        auto it = ends.find({p[0], p[1]});
        if (it != ends.end())
            for (std::size_t i : it->second)
                if (!used[i] && i != self) return i;
        return segs.size();
    };
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        std::vector<std::array<double, 2>> pts{segs[i].p0, segs[i].q};
        // grow forward from the tail, then backward from the head
        for (;;) {
            const std::size_t j = next_at(pts.back(), i);
            if (j >= segs.size()) break;
            used[j] = true;
            pts.push_back(segs[j].p0 == pts.back() ? segs[j].q : segs[j].p0);
            if (pts.back() == pts.front()) break;
        }
        const bool closed = pts.size() > 2 && pts.front() == pts.back();
        if (!closed) {
            for (;;) {
                const std::size_t j = next_at(pts.front(), i);
                if (j >= segs.size()) break;
                used[j] = true;
                pts.insert(pts.begin(), segs[j].p0 == pts.front() ? segs[j].q : segs[j].p0);
            }
        }
        ContourLine line;
        line.level = level;
        line.closed = closed;
        if (closed) pts.pop_back();
        line.points = std::move(pts);
        lines.push_back(std::move(line));
    }
    return lines;
}

void fill_contours(ProbabilityMap& m) {
    m.contours.clear();
    for (double level : {0.5, 0.75, 0.9}) {
        std::vector<Segment> segs;
        marching_squares(m, level, segs);
        auto lines = chain_segments(segs, level);
        for (auto& l : lines) m.contours.push_back(std::move(l));
    }
}

} // namespace

ProbabilityMap MapAccumulator::finish() const {
    ProbabilityMap m = map_;
    fill_p_hat(m);
    fill_p_smooth(m);
    fill_contours(m);
    return m;
}

ProbabilityMap probability_map(const std::vector<CampaignRecord>& records, int axis_a, int axis_b,
                               int bins_a, int bins_b, double lo_a, double hi_a, double lo_b,
                               double hi_b) {
    if (records.empty()) throw ValueError("probability_map: no records");
    MapAccumulator acc(axis_a, axis_b, bins_a, bins_b, lo_a, hi_a, lo_b, hi_b);
    for (const auto& r : records) {
        if (r.label < 0) continue;   // divergent samples carry no outcome
        acc.add(r.xi, r.label == 1);
    }
    return acc.finish();
}

ProbabilityMap probability_map(const std::vector<CampaignRecord>& records, int axis_a, int axis_b,
                               int bins_a, int bins_b) {
    if (records.empty()) throw ValueError("probability_map: no records");
    double lo_a = 0.0, hi_a = 0.0, lo_b = 0.0, hi_b = 0.0;
    bool first = true;
    for (const auto& r : records) {
        if (r.label < 0) continue;
        const double a = r.xi[axis_a], b = r.xi[axis_b];
        if (first) {
            lo_a = hi_a = a;
            lo_b = hi_b = b;
            first = false;
        } else {
            lo_a = std::min(lo_a, a);
            hi_a = std::max(hi_a, a);
            lo_b = std::min(lo_b, b);
            hi_b = std::max(hi_b, b);
        }
    }
    if (first) throw ValueError("probability_map: no valid records");
    if (hi_a <= lo_a) hi_a = lo_a + 1.0;
    if (hi_b <= lo_b) hi_b = lo_b + 1.0;
    return probability_map(records, axis_a, axis_b, bins_a, bins_b, lo_a, hi_a, lo_b, hi_b);
}

double map_mean_abs_difference(const ProbabilityMap& a, const ProbabilityMap& b) {
    if (a.p_hat.size() != b.p_hat.size() || a.edges_a != b.edges_a || a.edges_b != b.edges_b)
        throw ValueError("map_mean_abs_difference: maps are not on the same grid");
    double sum = 0.0;
    long n = 0;
    for (std::size_t i = 0; i < a.p_hat.size(); ++i) {
        if (std::isnan(a.p_hat[i]) || std::isnan(b.p_hat[i])) continue;
        sum += std::fabs(a.p_hat[i] - b.p_hat[i]);
        ++n;
    }
    if (n == 0) throw ValueError("map_mean_abs_difference: no jointly populated cells");
    return sum / n;
}

std::vector<CampaignRecord> read_records_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open records file: " + file.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("xi0,", 0) != 0)
        throw IoError("records file " + file.string() + ": missing header row");
    const long n_cols = 1 + static_cast<long>(std::count(line.begin(), line.end(), ','));
    const long latent_dim = n_cols - kParamCount - 2;
    if (latent_dim < 1)
        throw IoError("records file " + file.string() + ": header has too few columns");

    std::vector<CampaignRecord> out;
    std::vector<std::string> cells;
    long row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        cells.clear();
        std::size_t pos = 0;
        while (true) {
            const std::size_t next = line.find(',', pos);
            cells.push_back(line.substr(pos, next - pos));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (static_cast<long>(cells.size()) != n_cols)
            throw IoError("records file " + file.string() + " row " + std::to_string(row) +
                          ": expected " + std::to_string(n_cols) + " cells, got " +
                          std::to_string(cells.size()));
        CampaignRecord r;
        for (int i = 0; i < kParamCount; ++i) r.xi[i] = std::stod(cells[static_cast<std::size_t>(i)]);
        const std::string& label = cells[kParamCount];
        if (label == "success")
            r.label = 1;
        else if (label == "failure")
            r.label = 0;
        else if (label == "invalid")
            r.label = -1;
        else
            throw IoError("records file " + file.string() + " row " + std::to_string(row) +
                          ": unknown label '" + label + "'");
        r.t_end_us = std::stod(cells[kParamCount + 1]);
        r.v_terminal.resize(static_cast<std::size_t>(latent_dim));
        for (long c = 0; c < latent_dim; ++c)
            r.v_terminal[static_cast<std::size_t>(c)] =
                std::stod(cells[static_cast<std::size_t>(kParamCount + 2 + c)]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_map_csv(const ProbabilityMap& map, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "axis_a,axis_b,ia,ib,a_lo,a_hi,b_lo,b_hi,total,success,p_hat,p_smooth\n";
    const int na = map.bins_a(), nb = map.bins_b();
    for (int ia = 0; ia < na; ++ia)
        for (int ib = 0; ib < nb; ++ib) {
            const std::size_t cell = static_cast<std::size_t>(ia) * nb + ib;
            out << map.axis_a << ',' << map.axis_b << ',' << ia << ',' << ib << ','
                << fmt_double(map.edges_a[static_cast<std::size_t>(ia)]) << ','
                << fmt_double(map.edges_a[static_cast<std::size_t>(ia) + 1]) << ','
                << fmt_double(map.edges_b[static_cast<std::size_t>(ib)]) << ','
                << fmt_double(map.edges_b[static_cast<std::size_t>(ib) + 1]) << ','
                << map.counts_total[cell] << ',' << map.counts_success[cell] << ',';
            if (std::isnan(map.p_hat[cell]))
                out << "nodata,nodata\n";
            else
                out << fmt_double(map.p_hat[cell]) << ',' << fmt_double(map.p_smooth[cell]) << '\n';
        }
    write_text_file(file, out.str());
}

void write_contours_csv(const ProbabilityMap& map, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "level,line,closed,vertex,a,b\n";
    int line_idx = 0;
    for (const auto& line : map.contours) {
        for (std::size_t v = 0; v < line.points.size(); ++v)
            out << fmt_double(line.level) << ',' << line_idx << ',' << (line.closed ? 1 : 0) << ','
                << v << ',' << fmt_double(line.points[v][0]) << ','
                << fmt_double(line.points[v][1]) << '\n';
        ++line_idx;
    }
    write_text_file(file, out.str());
}

void write_map_pgm(const ProbabilityMap& map, const std::filesystem::path& file) {
    std::ostringstream out;
    const int na = map.bins_a(), nb = map.bins_b();
    out << "P2\n" << na << ' ' << nb << "\n255\n";
    for (int ib = nb - 1; ib >= 0; --ib) {
        for (int ia = 0; ia < na; ++ia) {
            const double p = map.p_hat[static_cast<std::size_t>(ia) * nb + ib];
            const int g = std::isnan(p) ? 0 : 1 + static_cast<int>(std::lround(p * 254.0));
            out << g << (ia + 1 < na ? ' ' : '\n');
        }
    }
    write_text_file(file, out.str());
}

namespace {

std::string record_line(const CampaignRecord& r, int latent_dim) {
    std::string s;
    for (int i = 0; i < kParamCount; ++i) {
        s += fmt_double(r.xi[i]);
        s += ',';
    }
    s += r.label == 1 ? "success" : r.label == 0 ? "failure" : "invalid";
    s += ',';
    s += fmt_double(r.t_end_us);
    for (int c = 0; c < latent_dim; ++c) {
        s += ',';
        s += fmt_double(r.v_terminal[static_cast<std::size_t>(c)]);
    }
    s += '\n';
    return s;
}

std::string count_tag(long n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08ld", n);
    return buf;
}

} // namespace

CampaignSummary run_campaign(const NodeMlp& model, const RbfModel& rbf,
                             const BranchClassifier& classifier, const CampaignConfig& cfg,
                             const std::filesystem::path& out_dir) {
    if (cfg.n_samples < 1) throw ValueError("run_campaign: n_samples must be >= 1");
    const int L = model.config().latent_dim;
    if (rbf.latent_dim() != L)
        throw ValueError("run_campaign: rbf latent dim " + std::to_string(rbf.latent_dim()) +
                         " != model latent dim " + std::to_string(L));
    if (!classifier.calibrated) throw StateError("run_campaign: classifier is not calibrated");

    std::filesystem::create_directories(out_dir);
    const std::vector<double> times = model.config().uniform_grid();
    const EnsembleBounds& bounds = rbf.bounds();

    std::vector<MapAccumulator> accs;
    for (auto [a, b] : cfg.axis_pairs)
        accs.emplace_back(a, b, cfg.map_bins, cfg.map_bins, bounds.lo[static_cast<std::size_t>(a)],
                          bounds.hi[static_cast<std::size_t>(a)],
                          bounds.lo[static_cast<std::size_t>(b)],
                          bounds.hi[static_cast<std::size_t>(b)]);

    std::vector<long> snapshots;
    for (double f : cfg.snapshot_fractions) {
        const long c = std::clamp(std::lround(f * static_cast<double>(cfg.n_samples)), 1L,
                                  cfg.n_samples);
        snapshots.push_back(c);
    }
    std::sort(snapshots.begin(), snapshots.end());
    snapshots.erase(std::unique(snapshots.begin(), snapshots.end()), snapshots.end());

    std::ofstream records(out_dir / "records.csv", std::ios::trunc);
    if (!records) throw IoError("cannot open " + (out_dir / "records.csv").string());
    records << "xi0,xi1,xi2,xi3,xi4,xi5,xi6,xi7,xi8,xi9,xi10,xi11,xi12,xi13,xi14,label,t_end_us";
    for (int c = 0; c < L; ++c) records << ",v" << c;
    records << '\n';

    CampaignSummary summary;
    summary.n_samples = cfg.n_samples;

    auto emit_snapshots = [&](long count) {
        for (std::size_t p = 0; p < accs.size(); ++p) {
            const ProbabilityMap m = accs[p].finish();
            const std::string stem = "map_xi" + std::to_string(m.axis_a) + "_xi" +
                                     std::to_string(m.axis_b) + "_n" + count_tag(count);
            write_map_csv(m, out_dir / (stem + ".csv"));
            write_contours_csv(m, out_dir / (stem + "_contours.csv"));
            if (cfg.write_pgm) write_map_pgm(m, out_dir / (stem + ".pgm"));
        }
    };

    constexpr long kBatch = 20000;
    constexpr int kMaxAttempts = 100000;
    std::vector<std::vector<CampaignRecord>> chunk_records(kReductionChunks);
    long done = 0;
    std::size_t next_snap = 0;
    while (done < cfg.n_samples) {
        long stop = std::min(done + kBatch, cfg.n_samples);
        if (next_snap < snapshots.size()) stop = std::min(stop, snapshots[next_snap]);
        const long batch = stop - done;
        for (auto& v : chunk_records) v.clear();

        parallel_chunks(static_cast<std::size_t>(batch), cfg.threads,
                        [&](int chunk, std::size_t cb, std::size_t ce) {
            auto& out = chunk_records[static_cast<std::size_t>(chunk)];
            for (std::size_t i = cb; i < ce; ++i) {
                const long index = done + static_cast<long>(i);
                Rng rng(Rng::stream_seed(cfg.seed, static_cast<unsigned long long>(index)));
                CampaignRecord rec;
                int attempts = 0;
                do {
                    if (++attempts > kMaxAttempts)
                        throw ValueError("run_campaign: rejection sampling stalled; ensemble "
                                         "bounds admit almost no samples");
                    rec.xi = sample_xi(rng);
                } while (!constrain_sample(rec.xi, bounds));
                std::vector<double> v0(static_cast<std::size_t>(L));
                const auto xi_std = standardize(rec.xi);
                rbf.eval_std(xi_std.data(), v0.data());
                try {
                    const Trajectory traj = integrate(model, v0, rec.xi, times);
                    rec.label = classifier.classify(traj) ? 1 : 0;
                    rec.t_end_us = times.back();
                    const double* last = traj.state(traj.n_points() - 1);
                    rec.v_terminal.assign(last, last + L);
                } catch (const DivergenceError& e) {
                    rec.label = -1;
                    const std::size_t step = std::min(static_cast<std::size_t>(e.step_index),
                                                      times.size() - 1);
                    rec.t_end_us = times[step];
                    rec.v_terminal.assign(static_cast<std::size_t>(L),
                                          std::numeric_limits<double>::quiet_NaN());
                }
                out.push_back(std::move(rec));
            }
        });

        for (const auto& chunk : chunk_records)
            for (const auto& rec : chunk) {
                records << record_line(rec, L);
                if (rec.label < 0) {
                    ++summary.n_invalid;
                } else {
                    (rec.label == 1 ? summary.n_success : summary.n_failure)++;
                    for (auto& acc : accs) acc.add(rec.xi, rec.label == 1);
                }
            }
        done = stop;
        while (next_snap < snapshots.size() && snapshots[next_snap] == done) {
            emit_snapshots(done);
            ++next_snap;
        }
    }
    records.close();
    if (!records) throw IoError("failed writing " + (out_dir / "records.csv").string());

    nlohmann::json j;
    j["format"] = "dnae-campaign/1";
    j["n_samples"] = summary.n_samples;
    j["n_success"] = summary.n_success;
    j["n_failure"] = summary.n_failure;
    j["n_invalid"] = summary.n_invalid;
    j["success_fraction"] = summary.success_fraction();
    j["seed"] = cfg.seed;
    write_text_file(out_dir / "summary.json", j.dump(2) + "\n");

    if (summary.n_invalid > 0)
        log_warn("run_campaign: " + std::to_string(summary.n_invalid) +
                 " divergent samples labeled invalid");
    log_info("run_campaign: " + std::to_string(summary.n_samples) + " samples, fraction " +
             fmt_double(summary.success_fraction()));
    return summary;
}

} // namespace dnae
