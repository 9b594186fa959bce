// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sta/model.hpp"
#include "sta/synth.hpp"

namespace sta {

enum class OptimizerKind { Adam, SGD };

struct TrainConfig {
    int epochs = 1;
    double lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    bool pseudo_label = false;

    void validate() const;
};

// Mean over non-ignored pixels of -log probs[r, c, label].
double cross_entropy_loss(const Tensor& probs, const Tensor& labels);

// Labels for every frame: annotated frames keep ground truth, the rest take
// the argmax predictions of a T=1 model. annotated holds 1-based indices.
std::vector<Tensor> generate_pseudo_labels(Model& single_frame_model,
                                           const std::vector<Tensor>& frames,
                                           const std::vector<Tensor>& gt_labels,
                                           const std::vector<int>& annotated);

class Trainer {
public:
    Trainer(Model& model, TrainConfig cfg);

    // One optimizer update from one sequence: frames run in temporal order on
    // a shared tape, the loss averages per-frame cross-entropy over
    // supervised frames. Returns the loss; NaN aborts with NumericalError.
    double train_step(const SequenceRecord& seq);

    // Runs cfg.epochs - completed_epochs() further epochs. Sequence order
    // reshuffles per epoch from (seed, epoch) alone, so a resumed run at an
    // epoch boundary replays the identical trajectory. log, when set,
    // receives one {"step":..,"epoch":..,"loss":..} line per step.
    void train(const Dataset& data, std::ostream* log);

    // Source of labels for frames outside the annotated set when
    // cfg.pseudo_label is on. Must be a T=1 model.
    void set_pseudo_model(Model* m) { pseudo_model_ = m; }

    int completed_epochs() const { return completed_epochs_; }
    long long global_step() const { return global_step_; }
    const TrainConfig& config() const { return cfg_; }

    // Optimizer moments and counters; the model itself saves separately.
    void save_state(const std::string& dir) const;
    void load_state(const std::string& dir);

private:
    Model& model_;
    TrainConfig cfg_;
    Model* pseudo_model_ = nullptr;
    int completed_epochs_ = 0;
    long long global_step_ = 0;
    long long adam_steps_ = 0;
    std::vector<std::string> param_names_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;

    void apply_gradients();
};

} // namespace sta
