// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "sta/tensor.hpp"

namespace sta {

// Label maps are [H x W] tensors holding integer class ids; 255 is the
// ignore sentinel throughout.
inline constexpr double kIgnoreLabel = 255.0;

// counts[gt][pred], accumulated over non-ignored pixels only.
struct ConfusionMatrix {
    int C = 0;
    std::vector<long long> counts;

    explicit ConfusionMatrix(int classes);
    long long& at(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * C + pred]; }
    long long at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * C + pred]; }
    long long total() const;
    void merge(const ConfusionMatrix& other);
};

void accumulate_confusion(const Tensor& pred, const Tensor& gt, int C, ConfusionMatrix& acc);

// Per-class TP/(TP+FP+FN); NaN for classes whose union is zero.
std::vector<double> per_class_iou(const ConfusionMatrix& cm);

// Mean of per-class IoU over classes with nonzero union.
double miou(const ConfusionMatrix& cm);

// Backward flow at frame t: the source position in frame t-1 for target
// pixel (r, c) is (r + dy, c + dx).
struct FlowField {
    Tensor flow; // [H x W x 2], (dy, dx)
};

struct WarpResult {
    Tensor warped; // [H x W], 255 where invalid
    Tensor valid;  // [H x W], 1.0 where warped carries a label
};

// Nearest-neighbor label transport: source = round(position + flow). Targets
// with out-of-bounds source, ignored source label, or a set occlusion bit
// become invalid. occlusion may be null.
WarpResult warp_labels(const Tensor& prev_pred, const FlowField& flow, const Tensor* occlusion);

// mIoU between the frame's prediction and the warped previous prediction,
// over valid pixels only.
double temporal_consistency(const Tensor& pred_t, const WarpResult& warped, int C);

struct MTCResult {
    double mtc = 0.0;
    std::vector<double> per_frame_tc; // index i holds TC for frame i+2; NaN if skipped
    int skipped_frames = 0;
};

// Mean of TC over frames 2..N, dropping frames with no valid warped pixel.
// occl is empty or holds N-1 masks aligned with flows.
MTCResult mean_temporal_consistency(const std::vector<Tensor>& preds,
                                    const std::vector<FlowField>& flows,
                                    const std::vector<Tensor>& occl, int C);

struct EvalReport {
    double miou = 0.0;
    std::vector<double> per_class_iou;
    double mtc = 0.0;
    std::vector<double> per_frame_tc;
    int skipped_frames = 0;
    long long num_eval_pixels = 0;

    std::string to_json() const;
};

} // namespace sta
