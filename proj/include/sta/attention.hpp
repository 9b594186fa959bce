// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <string>
#include <vector>

#include "sta/param_store.hpp"
#include "sta/tape.hpp"
#include "sta/tensor.hpp"

namespace sta {

inline constexpr double kLayerNormEps = 1e-5;

// Temporal attention settings. T is the context length in frames including the
// current one; lambda weights frame t-k by lambda^k. normalize divides the
// fused sums by the total weight and is off by default.
struct STAConfig {
    int T = 3;
    double lambda = 0.8;
    bool normalize = false;

    void validate() const;
    bool operator==(const STAConfig&) const = default;
};

// Token geometry of one encoder stage. channels is the per-pixel input depth
// (3 for RGB, the previous stage's dim otherwise).
struct PatchGrid {
    int H = 0;
    int W = 0;
    int P = 0;
    int channels = 3;
    int dim = 0;
    int heads = 1;

    int grid_h() const { return H / P; }
    int grid_w() const { return W / P; }
    int tokens() const { return grid_h() * grid_w(); }
    int head_dim() const { return dim / heads; }
    void validate() const;
};

// Per-head projections of one frame's tokens.
struct QKV {
    Tensor Q;
    Tensor K;
    Tensor V;
    int frame_index = 0;
};

struct CacheEntry {
    Tensor K;
    Tensor V;
    int frame_index = 0;
};

// Ring buffer of the last capacity frames' per-(layer, head) K/V pairs.
// Owned by exactly one in-flight sequence; begin_sequence wipes every slot.
class TemporalCache {
public:
    TemporalCache(int layers, int heads, int capacity);

    void begin_sequence(long sequence_id);
    long sequence_id() const { return sequence_id_; }
    int capacity() const { return capacity_; }
    int frames_seen() const { return frames_seen_; }

    // Marks one frame consumed; the model calls this once per forward_frame.
    void advance() { ++frames_seen_; }

    // Appends (K_t, V_t). t must exceed the newest cached frame index; the
    // oldest entry is evicted once the slot holds capacity entries.
    void push(int layer, int head, Tensor k, Tensor v, int t);

    // Entries ordered oldest to newest.
    const std::deque<CacheEntry>& slot(int layer, int head) const;

    long long push_count() const { return push_count_; }

private:
    int layers_;
    int heads_;
    int capacity_;
    int frames_seen_ = 0;
    long sequence_id_ = 0;
    long long push_count_ = 0;
    std::vector<std::deque<CacheEntry>> slots_;

    std::deque<CacheEntry>& slot_mut(int layer, int head);
};

// z_l = Linear(Flatten(p_l)) + e_pos_l. Patches enumerate row-major over the
// grid; flatten order is row-major over (row, col, channel) within a patch.
Tensor embed_patches(const Tensor& frame, const PatchGrid& grid, const Tensor& w_embed,
                     const Tensor& bias, const Tensor& e_pos);

QKV project_qkv(const Tensor& z, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                int frame_index);

struct FusedQKV {
    Tensor Q;
    Tensor K;
    Tensor V;
};

// Q stays the current frame's; K/V become sum over the window of
// lambda^(t-tau) K_tau with the current frame at weight 1. Entries outside
// [t-T+1, t-1] raise CacheError.
FusedQKV fuse_temporal(const QKV& current, const std::deque<CacheEntry>& slot,
                       const STAConfig& cfg, int t);

// Softmax(Q K^T / sqrt(d)) V for one head.
Tensor attend_head(const Tensor& q, const Tensor& k, const Tensor& v);

// Parameter names for one encoder layer, shared by the plain and taped paths.
struct LayerNames {
    std::string wq(int head) const;
    std::string wk(int head) const;
    std::string wv(int head) const;
    std::string wo() const;
    std::string ln1_gamma() const;
    std::string ln1_beta() const;
    std::string ln2_gamma() const;
    std::string ln2_beta() const;
    std::string ffn_w1() const;
    std::string ffn_b1() const;
    std::string ffn_w2() const;
    std::string ffn_b2() const;
    std::string prefix;
};

// Counters filled in during taped forwards; one fresh K/V projection per
// (frame, layer, head) proves cached frames are never reprojected.
struct ForwardStats {
    long long qkv_projections = 0;
};

// Full multi-head block on the tape: per-head project/fuse/attend, heads
// concatenated in index order, then W_O. Cached K/V join as constants; the
// current frame's K/V values are pushed to the cache afterwards. use_cache
// false gives plain single-frame attention with no cache traffic.
Tape::NodeId taped_msa(Tape& tape, Tape::NodeId z, TemporalCache* cache, int layer_id,
                       ParamStore& params, const LayerNames& names, const PatchGrid& grid,
                       const STAConfig& cfg, int t, ForwardStats* stats);

// Z <- LN(Z + MSA(Z)); Z <- LN(Z + FFN(Z)).
Tape::NodeId taped_encoder_block(Tape& tape, Tape::NodeId z, TemporalCache* cache, int layer_id,
                                 ParamStore& params, const LayerNames& names,
                                 const PatchGrid& grid, const STAConfig& cfg, int t,
                                 ForwardStats* stats);

// Convenience wrappers that run the taped graph and return the value only.
Tensor msa_forward(const Tensor& z, TemporalCache& cache, int layer_id, ParamStore& params,
                   const LayerNames& names, const PatchGrid& grid, const STAConfig& cfg, int t);

Tensor encoder_block_forward(const Tensor& z, TemporalCache& cache, int layer_id,
                             ParamStore& params, const LayerNames& names, const PatchGrid& grid,
                             const STAConfig& cfg, int t);

} // namespace sta
