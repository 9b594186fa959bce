// SPDX-License-Identifier: Apache-2.0
#include "sta/ablate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "sta/errors.hpp"
#include "sta/tensor_io.hpp"
#include "sta/train.hpp"

namespace sta {

EvalReport evaluate_labels(const Dataset& data,
                           const std::function<std::vector<Tensor>(int, const SequenceRecord&)>&
                               provider) {
    const int C = data.manifest().C;
    ConfusionMatrix cm(C);
    EvalReport report;
    double mtc_sum = 0.0;
    int mtc_seqs = 0;
    for (int i = 0; i < data.size(); ++i) {
        const SequenceRecord rec = data.load(i);
        const std::vector<Tensor> preds = provider(i, rec);
        if (preds.size() != rec.frames.size()) {
            throw ContractError("evaluate: sequence " + data.manifest().sequences[i].id + " has " +
                                std::to_string(preds.size()) + " predictions for " +
                                std::to_string(rec.frames.size()) + " frames");
        }
        for (int t : rec.annotated) {
            accumulate_confusion(preds[t - 1], rec.labels[t - 1], C, cm);
        }
        if (preds.size() < 2) continue;
        try {
            const MTCResult r = mean_temporal_consistency(preds, rec.flows, rec.occlusion, C);
            mtc_sum += r.mtc;
            ++mtc_seqs;
            report.skipped_frames += r.skipped_frames;
            report.per_frame_tc.insert(report.per_frame_tc.end(), r.per_frame_tc.begin(),
                                       r.per_frame_tc.end());
        } catch (const UndefinedMetricError&) {
            report.skipped_frames += static_cast<int>(preds.size()) - 1;
            report.per_frame_tc.insert(report.per_frame_tc.end(), preds.size() - 1, std::nan(""));
        }
    }
    report.miou = miou(cm);
    report.per_class_iou = per_class_iou(cm);
    report.num_eval_pixels = cm.total();
    if (mtc_seqs == 0) throw UndefinedMetricError("evaluate: temporal consistency undefined");
    report.mtc = mtc_sum / mtc_seqs;
    return report;
}

EvalReport evaluate_model(Model& model, const Dataset& data) {
    if (model.cfg.H != data.manifest().H || model.cfg.W != data.manifest().W ||
        model.cfg.C != data.manifest().C) {
        throw ContractError("evaluate: model geometry does not match the dataset");
    }
    return evaluate_labels(data, [&model](int, const SequenceRecord& rec) {
        std::vector<Tensor> preds;
        preds.reserve(rec.frames.size());
        for (const Prediction& p : model.forward_sequence(rec.frames)) {
            preds.push_back(p.labels);
        }
        return preds;
    });
}

EvalReport evaluate_prediction_dir(const Dataset& data, const std::string& pred_dir) {
    namespace fs = std::filesystem;
    return evaluate_labels(data, [&](int i, const SequenceRecord& rec) {
        const std::string& id = data.manifest().sequences[i].id;
        std::vector<Tensor> preds;
        preds.reserve(rec.frames.size());
        for (int t = 1; t <= static_cast<int>(rec.frames.size()); ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "pred_%04d.tns", t);
            preds.push_back(read_tns((fs::path(pred_dir) / id / name).string()));
        }
        return preds;
    });
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

AblationReport run_ablation(const RunConfig& cfg, const Dataset& train_data,
                            const Dataset& eval_data, std::ostream* progress) {
    cfg.validate();
    AblationReport report;
    report.t_values = cfg.t_values;
    for (int T : cfg.t_values) {
        std::vector<double> mious, mtcs;
        for (std::uint64_t seed : cfg.seeds) {
            ModelConfig mc;
            mc.H = train_data.manifest().H;
            mc.W = train_data.manifest().W;
            mc.C = train_data.manifest().C;
            StageConfig st;
            st.patch = cfg.patch;
            st.dim = cfg.dim;
            st.heads = cfg.heads;
            st.blocks = cfg.blocks;
            st.sta_enabled = true;
            mc.stages = {st};
            mc.decoder_dim = cfg.decoder_dim;
            mc.sta.T = T;
            mc.sta.lambda = cfg.lambda;
            Model model(mc);
            model.init_params(seed);
            TrainConfig tc;
            tc.epochs = cfg.epochs;
            tc.lr = cfg.lr;
            tc.seed = seed;
            Trainer trainer(model, tc);
            const auto start = std::chrono::steady_clock::now();
            trainer.train(train_data, nullptr);
            const auto end = std::chrono::steady_clock::now();
            const EvalReport ev = evaluate_model(model, eval_data);
            AblationRow row;
            row.T = T;
            row.seed = seed;
            row.miou = ev.miou;
            row.mtc = ev.mtc;
            row.train_seconds = std::chrono::duration<double>(end - start).count();
            report.rows.push_back(row);
            mious.push_back(row.miou);
            mtcs.push_back(row.mtc);
            if (progress != nullptr) {
                char line[160];
                std::snprintf(line, sizeof(line),
                              "T=%d seed=%llu miou=%.4f mtc=%.4f train_s=%.1f", T,
                              static_cast<unsigned long long>(seed), row.miou, row.mtc,
                              row.train_seconds);
                *progress << line << "\n" << std::flush;
            }
        }
        report.median_miou.push_back(median(mious));
        report.median_mtc.push_back(median(mtcs));
    }
    return report;
}

std::string AblationReport::to_json() const {
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const AblationRow& r : rows) {
        nlohmann::ordered_json row;
        row["T"] = r.T;
        row["seed"] = r.seed;
        row["miou"] = r.miou;
        row["mtc"] = r.mtc;
        row["train_seconds"] = r.train_seconds;
        j["rows"].push_back(row);
    }
    j["medians"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < t_values.size(); ++i) {
        nlohmann::ordered_json m;
        m["T"] = t_values[i];
        m["median_miou"] = median_miou[i];
        m["median_mtc"] = median_mtc[i];
        j["medians"].push_back(m);
    }
    return j.dump(2);
}

std::string AblationReport::to_table() const {
    std::string out = "  T      seed     miou      mtc   train_s\n";
    for (const AblationRow& r : rows) {
        char line[128];
        std::snprintf(line, sizeof(line), "%3d  %8llu  %7.4f  %7.4f  %8.1f\n", r.T,
                      static_cast<unsigned long long>(r.seed), r.miou, r.mtc, r.train_seconds);
        out += line;
    }
    out += "median per T:\n";
    for (std::size_t i = 0; i < t_values.size(); ++i) {
        char line[128];
        std::snprintf(line, sizeof(line), "%3d  median miou=%7.4f  median mtc=%7.4f\n",
                      t_values[i], median_miou[i], median_mtc[i]);
        out += line;
    }
    return out;
}

} // namespace sta
