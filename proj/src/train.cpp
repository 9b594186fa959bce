// SPDX-License-Identifier: Apache-2.0
#include "sta/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sta/errors.hpp"
#include "sta/rng.hpp"
#include "sta/tensor_io.hpp"

namespace sta {

void TrainConfig::validate() const {
    if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
    // Zero is allowed so a no-op trainer stays expressible; negative is not.
    if (!(lr >= 0.0)) throw ContractError("TrainConfig: lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ContractError("TrainConfig: moment decays must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ContractError("TrainConfig: eps must be positive");
}

double cross_entropy_loss(const Tensor& probs, const Tensor& labels) {
    if (probs.ndim() != 3) {
        throw ShapeError("cross_entropy_loss: probs " + probs.dims_str());
    }
    const int h = probs.dims[0], w = probs.dims[1], c = probs.dims[2];
    if (labels.ndim() != 2 || labels.dims[0] != h || labels.dims[1] != w) {
        throw ShapeError("cross_entropy_loss: labels " + labels.dims_str() + " vs probs " +
                         probs.dims_str());
    }
    double sum = 0.0;
    long long kept = 0;
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            const double lab = labels.at(r, col);
            if (lab == 255.0) continue;
            if (lab != std::floor(lab) || lab < 0.0 || lab >= static_cast<double>(c)) {
                throw ContractError("cross_entropy_loss: label " + std::to_string(lab));
            }
            sum += -std::log(probs.at(r, col, static_cast<int>(lab)));
            ++kept;
        }
    }
    if (kept == 0) throw UndefinedMetricError("cross_entropy_loss: all pixels ignored");
    return sum / static_cast<double>(kept);
}

std::vector<Tensor> generate_pseudo_labels(Model& single_frame_model,
                                           const std::vector<Tensor>& frames,
                                           const std::vector<Tensor>& gt_labels,
                                           const std::vector<int>& annotated) {
    if (single_frame_model.cfg.sta.T != 1) {
        throw ContractError("generate_pseudo_labels: pseudo-label model must have T = 1");
    }
    if (frames.size() != gt_labels.size()) {
        throw ContractError("generate_pseudo_labels: frame/label count mismatch");
    }
    std::vector<bool> is_annotated(frames.size(), false);
    for (int idx : annotated) {
        if (idx < 1 || idx > static_cast<int>(frames.size())) {
            throw ContractError("generate_pseudo_labels: annotated index " + std::to_string(idx) +
                                " out of range");
        }
        is_annotated[idx - 1] = true;
    }
    std::vector<Tensor> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (is_annotated[i]) {
            out.push_back(gt_labels[i]);
            continue;
        }
        TemporalCache cache = single_frame_model.make_cache();
        cache.begin_sequence(0);
        out.push_back(single_frame_model.forward_frame(frames[i], cache).labels);
    }
    return out;
}

Trainer::Trainer(Model& model, TrainConfig cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    for (const auto& [name, entry] : model_.params) {
        if (!entry.trainable) continue;
        param_names_.push_back(name);
        m_.emplace_back(entry.value.dims, 0.0);
        v_.emplace_back(entry.value.dims, 0.0);
    }
}

void Trainer::apply_gradients() {
    if (cfg_.optimizer == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < param_names_.size(); ++i) {
            Tensor& p = model_.params.value(param_names_[i]);
            const Tensor& g = model_.params.grad(param_names_[i]);
            for (std::size_t k = 0; k < p.size(); ++k) p.data[k] -= cfg_.lr * g.data[k];
        }
        return;
    }
    ++adam_steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(adam_steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(adam_steps_));
    for (std::size_t i = 0; i < param_names_.size(); ++i) {
        Tensor& p = model_.params.value(param_names_[i]);
        const Tensor& g = model_.params.grad(param_names_[i]);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m.data[k] = cfg_.beta1 * m.data[k] + (1.0 - cfg_.beta1) * g.data[k];
            v.data[k] = cfg_.beta2 * v.data[k] + (1.0 - cfg_.beta2) * g.data[k] * g.data[k];
            const double mhat = m.data[k] / bc1;
            const double vhat = v.data[k] / bc2;
            p.data[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double Trainer::train_step(const SequenceRecord& seq) {
    if (seq.frames.empty()) throw ContractError("train_step: empty sequence");
    std::vector<Tensor> labels;
    if (cfg_.pseudo_label) {
        if (pseudo_model_ == nullptr) {
            throw ContractError("train_step: pseudo_label set but no pseudo-label model provided");
        }
        labels = generate_pseudo_labels(*pseudo_model_, seq.frames, seq.labels, seq.annotated);
    }
    std::vector<bool> supervised(seq.frames.size(), false);
    if (labels.empty()) {
        for (int idx : seq.annotated) {
            if (idx >= 1 && idx <= static_cast<int>(seq.frames.size())) supervised[idx - 1] = true;
        }
    } else {
        supervised.assign(seq.frames.size(), true);
    }

    Tape tape;
    TemporalCache cache = model_.make_cache();
    cache.begin_sequence(static_cast<long>(global_step_) + 1);
    model_.stats = ForwardStats{};
    const int hw = model_.cfg.H * model_.cfg.W;
    std::vector<Tape::NodeId> frame_losses;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        Tape::NodeId logits = model_.build_frame_logits(
            tape, seq.frames[i], cache, FrameCtx{static_cast<int>(i) + 1, cache.sequence_id()});
        if (!supervised[i]) continue;
        const Tensor& lab = labels.empty() ? seq.labels[i] : labels[i];
        Tensor flat_labels;
        flat_labels.dims = {hw};
        flat_labels.data = lab.data;
        Tape::NodeId flat = tape.reshape(logits, {hw, model_.cfg.C});
        frame_losses.push_back(tape.cross_entropy_logits(flat, flat_labels));
    }
    if (frame_losses.empty()) {
        throw UndefinedMetricError("train_step: no supervised frames in sequence");
    }
    Tape::NodeId total = frame_losses[0];
    for (std::size_t i = 1; i < frame_losses.size(); ++i) {
        total = tape.add(total, frame_losses[i]);
    }
    total = tape.scale(total, 1.0 / static_cast<double>(frame_losses.size()));
    const double loss = tape.value(total).data[0];
    if (!std::isfinite(loss)) {
        throw NumericalError("train_step: loss is not finite at step " +
                             std::to_string(global_step_ + 1));
    }
    model_.params.zero_grads();
    tape.backward(total);
    apply_gradients();
    ++global_step_;
    return loss;
}

void Trainer::train(const Dataset& data, std::ostream* log) {
    if (data.size() == 0) throw ContractError("train: empty dataset");
    for (int epoch = completed_epochs_ + 1; epoch <= cfg_.epochs; ++epoch) {
        std::vector<int> order(data.size());
        for (int i = 0; i < data.size(); ++i) order[i] = i;
        // Stateless shuffle: the permutation depends on (seed, epoch) only.
        Rng rng(cfg_.seed ^ fnv1a64("epoch" + std::to_string(epoch)));
        for (int i = data.size() - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_int(0, i));
            std::swap(order[i], order[j]);
        }
        for (int idx : order) {
            const double loss = train_step(data.load(idx));
            if (log != nullptr) {
                *log << "{\"step\":" << global_step_ << ",\"epoch\":" << epoch
                     << ",\"loss\":" << loss << "}\n";
            }
        }
        completed_epochs_ = epoch;
    }
}

void Trainer::save_state(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "opt");
    nlohmann::ordered_json j;
    j["completed_epochs"] = completed_epochs_;
    j["global_step"] = global_step_;
    j["adam_steps"] = adam_steps_;
    j["optimizer"] = cfg_.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
    j["lr"] = cfg_.lr;
    j["seed"] = cfg_.seed;
    std::ofstream out(fs::path(dir) / "train_state.json");
    if (!out) throw FormatError("save_state: cannot write " + dir + "/train_state.json");
    out << j.dump(2) << "\n";
    for (std::size_t i = 0; i < param_names_.size(); ++i) {
        write_tns((fs::path(dir) / "opt" / (param_names_[i] + ".m.tns")).string(), m_[i],
                  DType::F64);
        write_tns((fs::path(dir) / "opt" / (param_names_[i] + ".v.tns")).string(), v_[i],
                  DType::F64);
    }
}

void Trainer::load_state(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string spath = (fs::path(dir) / "train_state.json").string();
    std::ifstream in(spath);
    if (!in) throw FormatError("load_state: cannot open " + spath);
    nlohmann::json j;
    try {
        in >> j;
        completed_epochs_ = j.at("completed_epochs").get<int>();
        global_step_ = j.at("global_step").get<long long>();
        adam_steps_ = j.at("adam_steps").get<long long>();
        const std::string opt = j.at("optimizer").get<std::string>();
        const OptimizerKind kind = opt == "adam" ? OptimizerKind::Adam : OptimizerKind::SGD;
        if (kind != cfg_.optimizer) {
            throw FormatError("load_state: checkpoint optimizer \"" + opt +
                              "\" does not match the configured one");
        }
        const auto seed = j.at("seed").get<std::uint64_t>();
        if (seed != cfg_.seed) {
            throw FormatError("load_state: checkpoint seed " + std::to_string(seed) +
                              " does not match configured seed " + std::to_string(cfg_.seed));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_state: " + spath + ": " + e.what());
    }
    for (std::size_t i = 0; i < param_names_.size(); ++i) {
        Tensor m = read_tns((fs::path(dir) / "opt" / (param_names_[i] + ".m.tns")).string());
        Tensor v = read_tns((fs::path(dir) / "opt" / (param_names_[i] + ".v.tns")).string());
        if (!m.same_dims(m_[i]) || !v.same_dims(v_[i])) {
            throw FormatError("load_state: moment dims mismatch for " + param_names_[i]);
        }
        m_[i] = std::move(m);
        v_[i] = std::move(v);
    }
}

} // namespace sta
