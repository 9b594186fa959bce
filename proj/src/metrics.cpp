// SPDX-License-Identifier: Apache-2.0
#include "sta/metrics.hpp"

#include <cmath>

#include "json.hpp"
#include "sta/errors.hpp"

namespace sta {

namespace {

void check_label_map(const Tensor& m, int C, const char* what) {
    if (m.ndim() != 2) {
        throw ShapeError(std::string(what) + ": expected [H x W], got " + m.dims_str());
    }
    for (double v : m.data) {
        if (v == kIgnoreLabel) continue;
        if (v != std::floor(v) || v < 0.0 || v >= static_cast<double>(C)) {
            throw ContractError(std::string(what) + ": label " + std::to_string(v) +
                                " outside {0.." + std::to_string(C - 1) + "} u {255}");
        }
    }
}

} // namespace

ConfusionMatrix::ConfusionMatrix(int classes) : C(classes) {
    if (classes < 2) throw ContractError("ConfusionMatrix: C must be >= 2");
    counts.assign(static_cast<std::size_t>(C) * C, 0);
}

long long ConfusionMatrix::total() const {
    long long n = 0;
    for (long long v : counts) n += v;
    return n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.C != C) throw ContractError("ConfusionMatrix::merge: class count mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate_confusion(const Tensor& pred, const Tensor& gt, int C, ConfusionMatrix& acc) {
    if (acc.C != C) throw ContractError("accumulate_confusion: C mismatch");
    require_same_dims(pred, gt, "accumulate_confusion");
    check_label_map(pred, C, "accumulate_confusion: pred");
    check_label_map(gt, C, "accumulate_confusion: gt");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred.data[i], g = gt.data[i];
        if (p == kIgnoreLabel || g == kIgnoreLabel) continue;
        ++acc.at(static_cast<int>(g), static_cast<int>(p));
    }
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.C);
    for (int c = 0; c < cm.C; ++c) {
        long long tp = cm.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < cm.C; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const long long uni = tp + fp + fn;
        out[c] = uni == 0 ? std::nan("") : static_cast<double>(tp) / static_cast<double>(uni);
    }
    return out;
}

double miou(const ConfusionMatrix& cm) {
    const std::vector<double> ious = per_class_iou(cm);
    double sum = 0.0;
    int n = 0;
    for (double v : ious) {
        if (std::isnan(v)) continue;
        sum += v;
        ++n;
    }
    if (n == 0) throw UndefinedMetricError("miou: every class has zero union");
    return sum / n;
}

WarpResult warp_labels(const Tensor& prev_pred, const FlowField& flow, const Tensor* occlusion) {
    if (prev_pred.ndim() != 2) {
        throw ShapeError("warp_labels: prediction " + prev_pred.dims_str());
    }
    const int h = prev_pred.dims[0], w = prev_pred.dims[1];
    if (flow.flow.ndim() != 3 || flow.flow.dims[0] != h || flow.flow.dims[1] != w ||
        flow.flow.dims[2] != 2) {
        throw ShapeError("warp_labels: flow " + flow.flow.dims_str() + " vs map " +
                         prev_pred.dims_str());
    }
    if (occlusion != nullptr) require_same_dims(*occlusion, prev_pred, "warp_labels occlusion");
    if (!flow.flow.all_finite()) throw ContractError("warp_labels: non-finite flow");
    WarpResult out;
    out.warped = Tensor({h, w}, kIgnoreLabel);
    out.valid = Tensor({h, w}, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (occlusion != nullptr && occlusion->at(r, c) != 0.0) continue;
            const long sy = std::lround(r + flow.flow.at(r, c, 0));
            const long sx = std::lround(c + flow.flow.at(r, c, 1));
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            const double lab = prev_pred.at(static_cast<int>(sy), static_cast<int>(sx));
            if (lab == kIgnoreLabel) continue;
            out.warped.at(r, c) = lab;
            out.valid.at(r, c) = 1.0;
        }
    }
    return out;
}

double temporal_consistency(const Tensor& pred_t, const WarpResult& warped, int C) {
    ConfusionMatrix cm(C);
    accumulate_confusion(pred_t, warped.warped, C, cm);
    if (cm.total() == 0) throw UndefinedMetricError("temporal_consistency: no valid pixels");
    return miou(cm);
}

MTCResult mean_temporal_consistency(const std::vector<Tensor>& preds,
                                    const std::vector<FlowField>& flows,
                                    const std::vector<Tensor>& occl, int C) {
    const int n = static_cast<int>(preds.size());
    if (n < 2) throw ContractError("mean_temporal_consistency: need >= 2 frames");
    if (static_cast<int>(flows.size()) != n - 1) {
        throw ContractError("mean_temporal_consistency: " + std::to_string(flows.size()) +
                            " flows for " + std::to_string(n) + " frames");
    }
    if (!occl.empty() && static_cast<int>(occl.size()) != n - 1) {
        throw ContractError("mean_temporal_consistency: occlusion list length mismatch");
    }
    MTCResult res;
    res.per_frame_tc.assign(n - 1, std::nan(""));
    double sum = 0.0;
    int counted = 0;
    for (int i = 0; i < n - 1; ++i) {
        const Tensor* occ = occl.empty() ? nullptr : &occl[i];
        const WarpResult wr = warp_labels(preds[i], flows[i], occ);
        try {
            const double tc = temporal_consistency(preds[i + 1], wr, C);
            res.per_frame_tc[i] = tc;
            sum += tc;
            ++counted;
        } catch (const UndefinedMetricError&) {
            ++res.skipped_frames;
        }
    }
    if (counted == 0) {
        throw UndefinedMetricError("mean_temporal_consistency: every frame skipped");
    }
    res.mtc = sum / counted;
    return res;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    auto opt = [](double v) {
        return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
    };
    j["miou"] = opt(miou);
    j["per_class_iou"] = nlohmann::ordered_json::array();
    for (double v : per_class_iou) j["per_class_iou"].push_back(opt(v));
    j["mtc"] = opt(mtc);
    j["per_frame_tc"] = nlohmann::ordered_json::array();
    for (double v : per_frame_tc) j["per_frame_tc"].push_back(opt(v));
    j["skipped_frames"] = skipped_frames;
    j["num_eval_pixels"] = num_eval_pixels;
    return j.dump(2);
}

} // namespace sta
