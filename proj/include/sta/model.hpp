// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sta/attention.hpp"
#include "sta/param_store.hpp"
#include "sta/tape.hpp"
#include "sta/tensor.hpp"

namespace sta {

// One encoder stage. sta_enabled picks temporal fusion for its blocks;
// stages run sequentially, each re-patching the previous stage's token grid.
struct StageConfig {
    int patch = 4;
    int dim = 32;
    int blocks = 2;
    int heads = 4;
    bool sta_enabled = true;

    bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
    int H = 64;
    int W = 64;
    int C = 4;
    std::vector<StageConfig> stages;
    STAConfig sta;
    int decoder_dim = 64;

    void validate() const;
    // 64x64 RGB, one stage (P=4, dim=32, 4 heads, 2 blocks), 4 classes.
    static ModelConfig toy_default();
    bool operator==(const ModelConfig&) const = default;
};

struct Prediction {
    Tensor probs;   // [H x W x C], rows sum to 1 per pixel
    Tensor labels;  // [H x W], argmax class ids, ties to smallest id
    int frame_index = 0;
};

// Multiply-add counts per component for one steady-state frame.
struct FlopReport {
    long long embedding = 0;
    long long qkv = 0;
    long long attn_scores = 0;
    long long attn_values = 0;
    long long fusion = 0;
    long long out_proj = 0;
    long long ffn = 0;
    long long decoder = 0;

    long long total_macs() const;
    long long total_flops() const { return 2 * total_macs(); }
};

FlopReport count_flops(const ModelConfig& cfg, int T);

// Frame position within its sequence; frames are 1-indexed.
struct FrameCtx {
    int t = 1;
    long sequence_id = 0;
};

struct Model {
    ModelConfig cfg;
    ParamStore params;
    ForwardStats stats;

    explicit Model(ModelConfig config);

    void init_params(std::uint64_t seed);
    TemporalCache make_cache() const;
    int total_blocks() const;
    int max_heads() const;
    // Input geometry of stage s (spatial dims shrink by each earlier patch).
    PatchGrid stage_grid(int s) const;

    // Builds the logits graph [H x W x C] for one frame and advances the
    // cache past t. Differentiable in every parameter; cached K/V of earlier
    // frames enter as constants.
    Tape::NodeId build_frame_logits(Tape& tape, const Tensor& frame, TemporalCache& cache,
                                    const FrameCtx& ctx);

    Prediction forward_frame(const Tensor& frame, TemporalCache& cache);
    Prediction forward_frame(const Tensor& frame, TemporalCache& cache, const FrameCtx& ctx);
    std::vector<Prediction> forward_sequence(const std::vector<Tensor>& frames);

    // Final-stage tokens to upsampled logits, without touching any cache.
    Tensor decode_features(const Tensor& tokens);

private:
    long next_sequence_id_ = 1;

    void register_params();
    Tape::NodeId taped_decoder(Tape& tape, Tape::NodeId tokens);
};

// Checkpoint layout: dir/config.json plus dir/params/<name>.tns, one file per
// parameter. Only single-stage models round-trip through the flat config.
void save_checkpoint(const Model& model, const std::string& dir);
Model load_checkpoint(const std::string& dir);

} // namespace sta
