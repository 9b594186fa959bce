// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "sta/metrics.hpp"
#include "sta/model.hpp"
#include "sta/run_config.hpp"
#include "sta/synth.hpp"

namespace sta {

// Scores per-sequence label maps from `provider` against a dataset: mIoU over
// annotated frames, mTC over every adjacent pair with the dataset's exact
// flows and occlusion masks, averaged over sequences.
EvalReport evaluate_labels(const Dataset& data,
                           const std::function<std::vector<Tensor>(int, const SequenceRecord&)>&
                               provider);

// Runs the model over every sequence and scores its argmax predictions.
EvalReport evaluate_model(Model& model, const Dataset& data);

// Scores label maps stored as pred_dir/<seq_id>/pred_%04d.tns.
EvalReport evaluate_prediction_dir(const Dataset& data, const std::string& pred_dir);

struct AblationRow {
    int T = 0;
    std::uint64_t seed = 0;
    double miou = 0.0;
    double mtc = 0.0;
    double train_seconds = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::vector<int> t_values;
    std::vector<double> median_miou; // aligned with t_values
    std::vector<double> median_mtc;

    std::string to_json() const;
    std::string to_table() const;
};

// One from-scratch train plus eval per (T, seed) pair; everything but T and
// seed is shared across cells. progress, when set, gets one line per cell.
AblationReport run_ablation(const RunConfig& cfg, const Dataset& train_data,
                            const Dataset& eval_data, std::ostream* progress);

} // namespace sta
