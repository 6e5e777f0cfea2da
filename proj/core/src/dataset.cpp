#include "dnae/dataset.hpp"

#include <cmath>

#include "dnae/errors.hpp"
#include "dnae/serialize.hpp"
#include "dnae/trajectory.hpp"

namespace dnae {

using json = nlohmann::json;

static void check(bool ok, const std::string& what, const std::filesystem::path& file) {
    if (!ok) throw IoError("dataset manifest " + file.string() + ": " + what);
}

Dataset Dataset::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    json m;
    try {
        m = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw IoError("dataset manifest " + manifest_path.string() + ": " + e.what());
    }
    check(m.value("format", "") == "dnae-dataset/1", "unknown format field", manifest_path);
    Dataset ds;
    ds.dir = dir;
    check(m.contains("grid") && m["grid"].contains("height") && m["grid"].contains("width"),
          "missing grid dims", manifest_path);
    ds.grid_h = m["grid"]["height"].get<int>();
    ds.grid_w = m["grid"]["width"].get<int>();
    ds.pixel_mm = m["grid"].value("pixel_mm", 0.0);
    ds.meta = m.value("meta", json::object());
    check(m.contains("trials") && m["trials"].is_array(), "missing trials array", manifest_path);
    std::size_t idx = 0;
    for (const auto& jt : m["trials"]) {
        TrialRecord r;
        const std::string where = "trial #" + std::to_string(idx);
        check(jt.contains("trial_id"), where + " missing trial_id", manifest_path);
        r.trial_id = jt["trial_id"].get<std::string>();
        check(jt.contains("xi") && jt["xi"].is_array() && jt["xi"].size() == kParamCount,
              where + " xi must have " + std::to_string(kParamCount) + " entries", manifest_path);
        for (int i = 0; i < kParamCount; ++i) r.xi[i] = jt["xi"][static_cast<std::size_t>(i)].get<double>();
        check(jt.contains("outcome"), where + " missing outcome", manifest_path);
        r.outcome = jt["outcome"].get<int>();
        check(r.outcome == 0 || r.outcome == 1, where + " outcome must be 0 or 1", manifest_path);
        check(jt.contains("frames") && jt["frames"].is_array(), where + " missing frames", manifest_path);
        for (const auto& f : jt["frames"]) r.frames.push_back(f.get<std::string>());
        check(jt.contains("times_us") && jt["times_us"].is_array(), where + " missing times_us",
              manifest_path);
        for (const auto& t : jt["times_us"]) r.times_us.push_back(t.get<double>());
        check(r.frames.size() == r.times_us.size(),
              where + " frames/times_us length mismatch", manifest_path);
        check(jt.contains("norm") && jt["norm"].contains("min") && jt["norm"].contains("max"),
              where + " missing norm bounds", manifest_path);
        r.norm_min = jt["norm"]["min"].get<double>();
        r.norm_max = jt["norm"]["max"].get<double>();
        check(r.norm_max > r.norm_min, where + " norm.max must exceed norm.min", manifest_path);
        validate(r.xi);   // throws ValueError naming the component
        ds.trials.push_back(std::move(r));
        ++idx;
    }
    return ds;
}

void Dataset::save_manifest() const {
    json m;
    m["format"] = "dnae-dataset/1";
    m["grid"] = {{"height", grid_h}, {"width", grid_w}, {"pixel_mm", pixel_mm}};
    m["meta"] = meta;
    json list = json::array();
    for (const auto& r : trials) {
        json jt;
        jt["trial_id"] = r.trial_id;
        jt["xi"] = r.xi.xi;
        jt["outcome"] = r.outcome;
        jt["frames"] = r.frames;
        jt["times_us"] = r.times_us;
        jt["norm"] = {{"min", r.norm_min}, {"max", r.norm_max}};
        list.push_back(std::move(jt));
    }
    m["trials"] = std::move(list);
    write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

Field Dataset::load_raw_frame(std::size_t trial, std::size_t snapshot) const {
    if (trial >= trials.size())
        throw ValueError("trial index " + std::to_string(trial) + " out of range");
    const auto& r = trials[trial];
    if (snapshot >= r.frames.size())
        throw ValueError("snapshot index " + std::to_string(snapshot) + " out of range for trial " +
                         r.trial_id);
    auto t = read_tensor(dir / r.frames[snapshot]);
    if (t->ndim() != 2 || t->shape[0] != grid_h || t->shape[1] != grid_w)
        throw IoError("frame " + r.frames[snapshot] + " has shape " + t->shape_str() +
                      ", expected [" + std::to_string(grid_h) + "," + std::to_string(grid_w) + "]");
    return tensor_to_field(*t);
}

Field Dataset::load_frame(std::size_t trial, std::size_t snapshot) const {
    const auto& r = trials[trial];
    return normalize(load_raw_frame(trial, snapshot), r.norm_min, r.norm_max);
}

// ---- latent trajectory container ----

void save_trajectories(const std::filesystem::path& dir, const TrajectorySet& set) {
    std::filesystem::create_directories(dir);
    json m;
    m["format"] = "dnae-trajectories/1";
    m["latent_dim"] = set.latent_dim;
    json list = json::array();
    for (const auto& tr : set.items) {
        if (tr.latent_dim() != set.latent_dim)
            throw ValueError("trajectory " + tr.trial_id + " has latent_dim " +
                             std::to_string(tr.latent_dim()) + ", set expects " +
                             std::to_string(set.latent_dim));
        const std::string file = tr.trial_id + ".dnt";
        auto t = Tensor::from({tr.n_points(), set.latent_dim}, tr.states);
        write_tensor(dir / file, *t);
        json jt;
        jt["trial_id"] = tr.trial_id;
        jt["xi"] = tr.xi.xi;
        jt["outcome"] = tr.outcome;
        jt["split"] = tr.split;
        jt["times_us"] = tr.times_us;
        jt["file"] = file;
        list.push_back(std::move(jt));
    }
    m["trials"] = std::move(list);
    write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

TrajectorySet load_trajectories(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    json m;
    try {
        m = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw IoError("trajectory manifest " + manifest_path.string() + ": " + e.what());
    }
    check(m.value("format", "") == "dnae-trajectories/1", "unknown format field", manifest_path);
    TrajectorySet set;
    set.latent_dim = m.at("latent_dim").get<int>();
    for (const auto& jt : m.at("trials")) {
        Trajectory tr;
        tr.trial_id = jt.at("trial_id").get<std::string>();
        for (int i = 0; i < kParamCount; ++i)
            tr.xi[i] = jt.at("xi")[static_cast<std::size_t>(i)].get<double>();
        tr.outcome = jt.value("outcome", -1);
        tr.split = jt.value("split", "");
        for (const auto& t : jt.at("times_us")) tr.times_us.push_back(t.get<double>());
        auto tens = read_tensor(dir / jt.at("file").get<std::string>());
        if (tens->ndim() != 2 || tens->shape[0] != tr.n_points() || tens->shape[1] != set.latent_dim)
            throw IoError("trajectory file for " + tr.trial_id + " has shape " + tens->shape_str() +
                          ", expected [" + std::to_string(tr.n_points()) + "," +
                          std::to_string(set.latent_dim) + "]");
        tr.states = std::move(tens->data);
        set.items.push_back(std::move(tr));
    }
    return set;
}

SplitIndices split_trials(std::size_t n_trials, double val_fraction) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ValueError("val_fraction must lie in (0,1), got " + std::to_string(val_fraction));
    SplitIndices s;
    const std::size_t stride = static_cast<std::size_t>(std::lround(1.0 / val_fraction));
    for (std::size_t i = 0; i < n_trials; ++i) {
        // offset so validation picks interior trials rather than the first one
        if (stride > 0 && i % stride == stride / 2) s.val.push_back(i);
        else s.train.push_back(i);
    }
    return s;
}

} // namespace dnae
