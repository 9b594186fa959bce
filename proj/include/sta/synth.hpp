// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sta/metrics.hpp"
#include "sta/tensor.hpp"

namespace sta {

enum class ShapeKind { Rectangle, Disk };

// One moving shape. Rectangles anchor at top-left (y, x) with extent h x w;
// disks at center (y, x) with the given radius. Velocity is integer
// pixels/frame; motion clamps at the frame border.
struct ShapeDef {
    ShapeKind kind = ShapeKind::Rectangle;
    int cls = 1;
    int y = 0;
    int x = 0;
    int h = 8;
    int w = 8;
    int radius = 4;
    int vy = 0;
    int vx = 0;
};

struct SceneSpec {
    int H = 64;
    int W = 64;
    int C = 4;
    std::vector<ShapeDef> shapes;
    double texture_amp = 0.25;
    int length = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SequenceRecord {
    std::vector<Tensor> frames;    // [H x W x 3], values in [0, 1]
    std::vector<Tensor> labels;    // [H x W] class ids
    std::vector<FlowField> flows;  // length-1 entries; flows[i] maps frame i+2 back to i+1
    std::vector<Tensor> occlusion; // [H x W] 0/1; 1 = no valid source in the previous frame
    std::vector<int> annotated;    // 1-based frame indices carrying labels
};

// Base color of a class, inside [0.25, 0.75] per channel so noise up to
// 0.25 stays within [0, 1].
std::array<double, 3> class_color(int cls);

// Shapes painted in order (later on top) over background class 0; backward
// flow is the exact negative per-frame motion of each pixel's owner.
// Deterministic in spec.seed; frame values are float32-representable.
SequenceRecord generate_sequence(const SceneSpec& spec);

// Random scene with 1..3 shapes, velocities in [-2, 2].
SceneSpec random_scene_spec(int H, int W, int C, int length, double texture_amp,
                            std::uint64_t seed);

struct SeqMeta {
    std::string id;
    int length = 0;
    std::vector<int> annotated;
};

struct DatasetManifest {
    int version = 1;
    int H = 0;
    int W = 0;
    int C = 0;
    std::uint64_t seed = 0;
    std::vector<SeqMeta> sequences;
};

// Layout: dir/manifest.json; dir/sequences/<id>/frame_%04d.tns (f32),
// label_%04d.tns (u8), flow_%04d.tns (f32), occl_%04d.tns (u8). Flow and
// occlusion files are numbered by their target frame, starting at 0002.
void write_dataset(const std::vector<SequenceRecord>& records, const DatasetManifest& manifest,
                   const std::string& dir);

// Validates the manifest and the presence of every referenced file up front;
// sequences load on demand.
class Dataset {
public:
    explicit Dataset(const std::string& dir);

    const DatasetManifest& manifest() const { return manifest_; }
    int size() const { return static_cast<int>(manifest_.sequences.size()); }
    SequenceRecord load(int index) const;

private:
    std::string dir_;
    DatasetManifest manifest_;
};

struct CorpusConfig {
    int train_seqs = 200;
    int eval_seqs = 40;
    int length = 8;
    int H = 64;
    int W = 64;
    int C = 4;
    double texture_amp = 0.25;
    double annotated_fraction = 1.0;
    std::uint64_t seed = 0;
};

// Writes one dataset of count sequences, sequence i seeded seed_base + i.
void generate_dataset(const CorpusConfig& cfg, int count, std::uint64_t seed_base,
                      const std::string& dir);

// Writes dir/train and dir/eval datasets drawn from disjoint seed streams.
void generate_corpus(const CorpusConfig& cfg, const std::string& dir);

} // namespace sta
