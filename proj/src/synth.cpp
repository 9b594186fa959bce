// SPDX-License-Identifier: Apache-2.0
#include "sta/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sta/errors.hpp"
#include "sta/rng.hpp"
#include "sta/tensor_io.hpp"

namespace sta {

namespace {

struct Bounds {
    int y_min, y_max, x_min, x_max; // inclusive anchor range
};

Bounds anchor_bounds(const ShapeDef& s, int H, int W) {
    if (s.kind == ShapeKind::Rectangle) {
        return {0, H - s.h, 0, W - s.w};
    }
    return {s.radius, H - 1 - s.radius, s.radius, W - 1 - s.radius};
}

void paint(Tensor& label, Tensor& owner, const ShapeDef& s, int y, int x, int shape_idx) {
    const int H = label.dims[0], W = label.dims[1];
    if (s.kind == ShapeKind::Rectangle) {
        for (int r = y; r < y + s.h; ++r) {
            for (int c = x; c < x + s.w; ++c) {
                label.at(r, c) = s.cls;
                owner.at(r, c) = shape_idx;
            }
        }
        return;
    }
    const long rr = static_cast<long>(s.radius) * s.radius;
    for (int r = std::max(0, y - s.radius); r <= std::min(H - 1, y + s.radius); ++r) {
        for (int c = std::max(0, x - s.radius); c <= std::min(W - 1, x + s.radius); ++c) {
            const long dy = r - y, dx = c - x;
            if (dy * dy + dx * dx <= rr) {
                label.at(r, c) = s.cls;
                owner.at(r, c) = shape_idx;
            }
        }
    }
}

} // namespace

void SceneSpec::validate() const {
    if (H < 1 || W < 1 || length < 1) throw ContractError("SceneSpec: bad dims or length");
    if (C < 2) throw ContractError("SceneSpec: C must be >= 2");
    if (!(texture_amp >= 0.0 && texture_amp <= 0.25)) {
        throw ContractError("SceneSpec: texture_amp must be in [0, 0.25]");
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const ShapeDef& s = shapes[i];
        if (s.cls < 1 || s.cls >= C) {
            throw ContractError("SceneSpec: shape " + std::to_string(i) + " class " +
                                std::to_string(s.cls) + " outside {1.." + std::to_string(C - 1) +
                                "}");
        }
        if (s.kind == ShapeKind::Rectangle && (s.h < 1 || s.w < 1)) {
            throw ContractError("SceneSpec: empty rectangle");
        }
        if (s.kind == ShapeKind::Disk && s.radius < 1) {
            throw ContractError("SceneSpec: empty disk");
        }
        const Bounds b = anchor_bounds(s, H, W);
        if (s.y < b.y_min || s.y > b.y_max || s.x < b.x_min || s.x > b.x_max) {
            throw ContractError("SceneSpec: shape " + std::to_string(i) +
                                " out of bounds at the first frame");
        }
    }
}

std::array<double, 3> class_color(int cls) {
    // Golden-ratio channel offsets keep neighboring classes far apart.
    auto frac = [](double v) { return v - std::floor(v); };
    const double c = static_cast<double>(cls);
    return {0.25 + 0.5 * frac(0.12 + c * 0.6180339887498949),
            0.25 + 0.5 * frac(0.58 + c * 0.7548776662466927),
            0.25 + 0.5 * frac(0.83 + c * 0.5698402909980532)};
}

SequenceRecord generate_sequence(const SceneSpec& spec) {
    spec.validate();
    const int H = spec.H, W = spec.W, n_shapes = static_cast<int>(spec.shapes.size());
    Rng rng(spec.seed);
    SequenceRecord rec;

    std::vector<int> ys(n_shapes), xs(n_shapes);
    for (int i = 0; i < n_shapes; ++i) {
        ys[i] = spec.shapes[i].y;
        xs[i] = spec.shapes[i].x;
    }
    std::vector<int> prev_dy(n_shapes, 0), prev_dx(n_shapes, 0);
    Tensor prev_label;

    for (int t = 1; t <= spec.length; ++t) {
        if (t > 1) {
            for (int i = 0; i < n_shapes; ++i) {
                const Bounds b = anchor_bounds(spec.shapes[i], H, W);
                const int ny = std::clamp(ys[i] + spec.shapes[i].vy, b.y_min, b.y_max);
                const int nx = std::clamp(xs[i] + spec.shapes[i].vx, b.x_min, b.x_max);
                prev_dy[i] = ny - ys[i];
                prev_dx[i] = nx - xs[i];
                ys[i] = ny;
                xs[i] = nx;
            }
        }
        Tensor label({H, W}, 0.0);
        Tensor owner({H, W}, -1.0);
        for (int i = 0; i < n_shapes; ++i) paint(label, owner, spec.shapes[i], ys[i], xs[i], i);

        if (t > 1) {
            FlowField ff;
            ff.flow = Tensor({H, W, 2}, 0.0);
            Tensor occl({H, W}, 0.0);
            for (int r = 0; r < H; ++r) {
                for (int c = 0; c < W; ++c) {
                    const int own = static_cast<int>(owner.at(r, c));
                    // Backward flow: where this pixel's content sat one frame ago.
                    const int dy = own >= 0 ? -prev_dy[own] : 0;
                    const int dx = own >= 0 ? -prev_dx[own] : 0;
                    ff.flow.at(r, c, 0) = dy;
                    ff.flow.at(r, c, 1) = dx;
                    const int sy = r + dy, sx = c + dx;
                    if (sy < 0 || sy >= H || sx < 0 || sx >= W ||
                        prev_label.at(sy, sx) != label.at(r, c)) {
                        occl.at(r, c) = 1.0;
                    }
                }
            }
            rec.flows.push_back(std::move(ff));
            rec.occlusion.push_back(std::move(occl));
        }

        Tensor frame({H, W, 3});
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const auto base = class_color(static_cast<int>(label.at(r, c)));
                for (int k = 0; k < 3; ++k) {
                    const double v = base[k] + rng.uniform(-spec.texture_amp, spec.texture_amp);
                    // Quantize so float32 storage round-trips bit-exactly.
                    frame.at(r, c, k) = static_cast<double>(static_cast<float>(v));
                }
            }
        }
        rec.frames.push_back(std::move(frame));
        prev_label = label;
        rec.labels.push_back(std::move(label));
    }
    for (int t = 1; t <= spec.length; ++t) rec.annotated.push_back(t);
    return rec;
}

SceneSpec random_scene_spec(int H, int W, int C, int length, double texture_amp,
                            std::uint64_t seed) {
    Rng rng(seed);
    SceneSpec spec;
    spec.H = H;
    spec.W = W;
    spec.C = C;
    spec.length = length;
    spec.texture_amp = texture_amp;
    spec.seed = seed;
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    const int unit = std::max(2, std::min(H, W) / 8);
    for (int i = 0; i < n; ++i) {
        ShapeDef s;
        s.kind = rng.uniform_int(0, 1) == 0 ? ShapeKind::Rectangle : ShapeKind::Disk;
        s.cls = static_cast<int>(rng.uniform_int(1, C - 1));
        if (s.kind == ShapeKind::Rectangle) {
            s.h = static_cast<int>(rng.uniform_int(unit, 3 * unit));
            s.w = static_cast<int>(rng.uniform_int(unit, 3 * unit));
        } else {
            s.radius = static_cast<int>(rng.uniform_int(std::max(1, unit / 2), 3 * unit / 2));
        }
        const Bounds b = anchor_bounds(s, H, W);
        s.y = static_cast<int>(rng.uniform_int(b.y_min, b.y_max));
        s.x = static_cast<int>(rng.uniform_int(b.x_min, b.x_max));
        s.vy = static_cast<int>(rng.uniform_int(-2, 2));
        s.vx = static_cast<int>(rng.uniform_int(-2, 2));
        spec.shapes.push_back(s);
    }
    return spec;
}

namespace {

std::string frame_name(const char* stem, int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.tns", stem, t);
    return buf;
}

} // namespace

void write_dataset(const std::vector<SequenceRecord>& records, const DatasetManifest& manifest,
                   const std::string& dir) {
    namespace fs = std::filesystem;
    if (records.size() != manifest.sequences.size()) {
        throw ContractError("write_dataset: " + std::to_string(records.size()) + " records vs " +
                            std::to_string(manifest.sequences.size()) + " manifest entries");
    }
    fs::create_directories(fs::path(dir) / "sequences");
    for (std::size_t i = 0; i < records.size(); ++i) {
        const SequenceRecord& rec = records[i];
        const SeqMeta& meta = manifest.sequences[i];
        if (static_cast<int>(rec.frames.size()) != meta.length) {
            throw ContractError("write_dataset: sequence " + meta.id + " length mismatch");
        }
        const fs::path sdir = fs::path(dir) / "sequences" / meta.id;
        fs::create_directories(sdir);
        for (int t = 1; t <= meta.length; ++t) {
            write_tns((sdir / frame_name("frame", t)).string(), rec.frames[t - 1], DType::F32);
            write_tns((sdir / frame_name("label", t)).string(), rec.labels[t - 1], DType::U8);
            if (t >= 2) {
                write_tns((sdir / frame_name("flow", t)).string(), rec.flows[t - 2].flow,
                          DType::F32);
                write_tns((sdir / frame_name("occl", t)).string(), rec.occlusion[t - 2],
                          DType::U8);
            }
        }
    }
    nlohmann::ordered_json j;
    j["version"] = manifest.version;
    j["H"] = manifest.H;
    j["W"] = manifest.W;
    j["classes"] = manifest.C;
    j["seed"] = manifest.seed;
    j["sequences"] = nlohmann::ordered_json::array();
    for (const auto& meta : manifest.sequences) {
        nlohmann::ordered_json s;
        s["id"] = meta.id;
        s["length"] = meta.length;
        s["annotated"] = meta.annotated;
        j["sequences"].push_back(s);
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw FormatError("write_dataset: cannot write " + dir + "/manifest.json");
    out << j.dump(2) << "\n";
}

Dataset::Dataset(const std::string& dir) : dir_(dir) {
    namespace fs = std::filesystem;
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    std::ifstream in(mpath);
    if (!in) throw FormatError("dataset: cannot open " + mpath);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: " + mpath + ": " + e.what());
    }
    try {
        manifest_.version = j.at("version").get<int>();
        manifest_.H = j.at("H").get<int>();
        manifest_.W = j.at("W").get<int>();
        manifest_.C = j.at("classes").get<int>();
        manifest_.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("sequences")) {
            SeqMeta meta;
            meta.id = s.at("id").get<std::string>();
            meta.length = s.at("length").get<int>();
            meta.annotated = s.at("annotated").get<std::vector<int>>();
            manifest_.sequences.push_back(std::move(meta));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset: bad manifest " + mpath + ": " + e.what());
    }
    if (manifest_.version != 1) {
        throw FormatError("dataset: unsupported manifest version " +
                          std::to_string(manifest_.version));
    }
    for (const auto& meta : manifest_.sequences) {
        if (meta.length < 1) throw FormatError("dataset: sequence " + meta.id + " has no frames");
        for (int idx : meta.annotated) {
            if (idx < 1 || idx > meta.length) {
                throw FormatError("dataset: sequence " + meta.id + " annotates frame " +
                                  std::to_string(idx) + " outside 1.." +
                                  std::to_string(meta.length));
            }
        }
        const fs::path sdir = fs::path(dir_) / "sequences" / meta.id;
        for (int t = 1; t <= meta.length; ++t) {
            for (const char* stem : {"frame", "label"}) {
                const fs::path p = sdir / frame_name(stem, t);
                if (!fs::exists(p)) throw FormatError("dataset: missing file " + p.string());
            }
            if (t >= 2) {
                for (const char* stem : {"flow", "occl"}) {
                    const fs::path p = sdir / frame_name(stem, t);
                    if (!fs::exists(p)) throw FormatError("dataset: missing file " + p.string());
                }
            }
        }
    }
}

SequenceRecord Dataset::load(int index) const {
    namespace fs = std::filesystem;
    if (index < 0 || index >= size()) {
        throw ContractError("dataset: sequence index " + std::to_string(index) + " out of range");
    }
    const SeqMeta& meta = manifest_.sequences[index];
    const fs::path sdir = fs::path(dir_) / "sequences" / meta.id;
    SequenceRecord rec;
    for (int t = 1; t <= meta.length; ++t) {
        Tensor frame = read_tns((sdir / frame_name("frame", t)).string());
        if (frame.ndim() != 3 || frame.dims[0] != manifest_.H || frame.dims[1] != manifest_.W ||
            frame.dims[2] != 3) {
            throw FormatError("dataset: frame dims " + frame.dims_str() + " in " + meta.id);
        }
        Tensor label = read_tns((sdir / frame_name("label", t)).string());
        if (label.ndim() != 2 || label.dims[0] != manifest_.H || label.dims[1] != manifest_.W) {
            throw FormatError("dataset: label dims " + label.dims_str() + " in " + meta.id);
        }
        rec.frames.push_back(std::move(frame));
        rec.labels.push_back(std::move(label));
        if (t >= 2) {
            FlowField ff;
            ff.flow = read_tns((sdir / frame_name("flow", t)).string());
            if (ff.flow.ndim() != 3 || ff.flow.dims[0] != manifest_.H ||
                ff.flow.dims[1] != manifest_.W || ff.flow.dims[2] != 2) {
                throw FormatError("dataset: flow dims " + ff.flow.dims_str() + " in " + meta.id);
            }
            Tensor occl = read_tns((sdir / frame_name("occl", t)).string());
            if (!occl.same_dims(rec.labels.back())) {
                throw FormatError("dataset: occlusion dims " + occl.dims_str() + " in " + meta.id);
            }
            rec.flows.push_back(std::move(ff));
            rec.occlusion.push_back(std::move(occl));
        }
    }
    rec.annotated = meta.annotated;
    return rec;
}

void generate_dataset(const CorpusConfig& cfg, int count, std::uint64_t seed_base,
                      const std::string& dir) {
    std::vector<SequenceRecord> records;
    DatasetManifest manifest;
    manifest.H = cfg.H;
    manifest.W = cfg.W;
    manifest.C = cfg.C;
    manifest.seed = cfg.seed;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seq_seed = seed_base + static_cast<std::uint64_t>(i);
        SceneSpec spec =
            random_scene_spec(cfg.H, cfg.W, cfg.C, cfg.length, cfg.texture_amp, seq_seed);
        SequenceRecord rec = generate_sequence(spec);
        if (cfg.annotated_fraction < 1.0) {
            Rng rng(seq_seed ^ 0x616e6e6f74ULL);
            std::vector<int> kept;
            for (int t = 1; t <= cfg.length; ++t) {
                if (rng.uniform() < cfg.annotated_fraction) kept.push_back(t);
            }
            if (kept.empty()) kept.push_back(1);
            rec.annotated = kept;
        }
        char id[16];
        std::snprintf(id, sizeof(id), "seq_%04d", i);
        SeqMeta meta;
        meta.id = id;
        meta.length = cfg.length;
        meta.annotated = rec.annotated;
        manifest.sequences.push_back(std::move(meta));
        records.push_back(std::move(rec));
    }
    write_dataset(records, manifest, dir);
}

void generate_corpus(const CorpusConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    // Disjoint seed streams keep the eval split independent of train count.
    generate_dataset(cfg, cfg.train_seqs, cfg.seed * 0x9e3779b97f4a7c15ULL + 1,
                     (fs::path(dir) / "train").string());
    generate_dataset(cfg, cfg.eval_seqs, cfg.seed * 0x9e3779b97f4a7c15ULL + 0x8000000000000000ULL,
                     (fs::path(dir) / "eval").string());
}

} // namespace sta
