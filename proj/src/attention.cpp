// SPDX-License-Identifier: Apache-2.0
#include "sta/attention.hpp"

#include <cmath>
#include <utility>

#include "sta/errors.hpp"
#include "sta/linalg.hpp"

namespace sta {

void STAConfig::validate() const {
    if (T < 1) throw ContractError("STAConfig: T must be >= 1, got " + std::to_string(T));
    if (!(lambda > 0.0 && lambda <= 1.0)) {
        throw ContractError("STAConfig: lambda must be in (0, 1], got " + std::to_string(lambda));
    }
}

void PatchGrid::validate() const {
    if (H <= 0 || W <= 0 || P <= 0 || channels <= 0 || dim <= 0 || heads <= 0) {
        throw ContractError("PatchGrid: all fields must be positive");
    }
    if (H % P != 0 || W % P != 0) {
        throw ShapeError("PatchGrid: patch " + std::to_string(P) + " must divide " +
                         std::to_string(H) + "x" + std::to_string(W));
    }
    if (dim % heads != 0) {
        throw ShapeError("PatchGrid: heads " + std::to_string(heads) + " must divide dim " +
                         std::to_string(dim));
    }
}

TemporalCache::TemporalCache(int layers, int heads, int capacity)
    : layers_(layers), heads_(heads), capacity_(capacity) {
    if (layers < 1 || heads < 1 || capacity < 0) {
        throw ContractError("TemporalCache: bad geometry");
    }
    slots_.resize(static_cast<std::size_t>(layers) * heads);
}

void TemporalCache::begin_sequence(long sequence_id) {
    for (auto& s : slots_) s.clear();
    sequence_id_ = sequence_id;
    frames_seen_ = 0;
}

std::deque<CacheEntry>& TemporalCache::slot_mut(int layer, int head) {
    if (layer < 0 || layer >= layers_ || head < 0 || head >= heads_) {
        throw ContractError("TemporalCache: slot (" + std::to_string(layer) + ", " +
                            std::to_string(head) + ") out of range");
    }
    return slots_[static_cast<std::size_t>(layer) * heads_ + head];
}

const std::deque<CacheEntry>& TemporalCache::slot(int layer, int head) const {
    return const_cast<TemporalCache*>(this)->slot_mut(layer, head);
}

void TemporalCache::push(int layer, int head, Tensor k, Tensor v, int t) {
    auto& s = slot_mut(layer, head);
    ++push_count_;
    if (capacity_ == 0) return;
    if (!s.empty()) {
        if (t <= s.back().frame_index) {
            throw CacheError("cache push: frame " + std::to_string(t) +
                             " not after cached frame " + std::to_string(s.back().frame_index));
        }
        if (!k.same_dims(s.back().K) || !v.same_dims(s.back().V)) {
            throw CacheError("cache push: K/V dims changed mid-sequence");
        }
    }
    if (!k.same_dims(v)) throw CacheError("cache push: K dims " + k.dims_str() + " vs V " + v.dims_str());
    s.push_back(CacheEntry{std::move(k), std::move(v), t});
    while (static_cast<int>(s.size()) > capacity_) s.pop_front();
}

Tensor embed_patches(const Tensor& frame, const PatchGrid& grid, const Tensor& w_embed,
                     const Tensor& bias, const Tensor& e_pos) {
    grid.validate();
    if (frame.ndim() != 3 || frame.dims[0] != grid.H || frame.dims[1] != grid.W ||
        frame.dims[2] != grid.channels) {
        throw ShapeError("embed_patches: frame " + frame.dims_str() + " vs grid " +
                         std::to_string(grid.H) + "x" + std::to_string(grid.W) + "x" +
                         std::to_string(grid.channels));
    }
    const int flat = grid.channels * grid.P * grid.P;
    if (w_embed.ndim() != 2 || w_embed.rows() != flat || w_embed.cols() != grid.dim) {
        throw ShapeError("embed_patches: W " + w_embed.dims_str());
    }
    if (e_pos.ndim() != 2 || e_pos.rows() != grid.tokens() || e_pos.cols() != grid.dim) {
        throw ShapeError("embed_patches: e_pos " + e_pos.dims_str());
    }
    Tensor patches = image_to_patches(frame, grid.P);
    Tensor z = linear(patches, w_embed, &bias);
    return add(z, e_pos);
}

QKV project_qkv(const Tensor& z, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                int frame_index) {
    QKV out;
    out.Q = matmul(z, w_q);
    out.K = matmul(z, w_k);
    out.V = matmul(z, w_v);
    out.frame_index = frame_index;
    return out;
}

namespace {

void check_window(const std::deque<CacheEntry>& slot, const STAConfig& cfg, int t) {
    if (static_cast<int>(slot.size()) > cfg.T - 1) {
        throw CacheError("fusion window: " + std::to_string(slot.size()) + " entries exceed T-1 = " +
                         std::to_string(cfg.T - 1));
    }
    int prev = t - cfg.T;
    for (const auto& e : slot) {
        if (e.frame_index >= t || e.frame_index < t - cfg.T + 1) {
            throw CacheError("fusion window: cached frame " + std::to_string(e.frame_index) +
                             " outside [" + std::to_string(t - cfg.T + 1) + ", " +
                             std::to_string(t - 1) + "]");
        }
        if (e.frame_index <= prev) throw CacheError("fusion window: frames not increasing");
        prev = e.frame_index;
    }
}

// Cached-frames-only sums: ksum/vsum += lambda^(t-tau) * entry; wsum collects
// the same coefficients. The current frame (weight 1) is not included.
void weighted_cache_sum(const std::deque<CacheEntry>& slot, const STAConfig& cfg, int t,
                        Tensor& ksum, Tensor& vsum, double& wsum) {
    for (auto it = slot.rbegin(); it != slot.rend(); ++it) {
        double w = cfg.lambda;
        for (int k = 1; k < t - it->frame_index; ++k) w *= cfg.lambda;
        axpy(ksum, w, it->K);
        axpy(vsum, w, it->V);
        wsum += w;
    }
}

} // namespace

FusedQKV fuse_temporal(const QKV& current, const std::deque<CacheEntry>& slot,
                       const STAConfig& cfg, int t) {
    cfg.validate();
    check_window(slot, cfg, t);
    Tensor ksum(current.K.dims, 0.0);
    Tensor vsum(current.V.dims, 0.0);
    double wsum = 0.0;
    for (const auto& e : slot) {
        if (!e.K.same_dims(current.K)) {
            throw CacheError("fusion: cached K " + e.K.dims_str() + " vs current " +
                             current.K.dims_str());
        }
    }
    weighted_cache_sum(slot, cfg, t, ksum, vsum, wsum);
    FusedQKV out;
    out.Q = current.Q;
    out.K = add(current.K, ksum);
    out.V = add(current.V, vsum);
    if (cfg.normalize) {
        const double total = 1.0 + wsum;
        out.K = scale(out.K, 1.0 / total);
        out.V = scale(out.V, 1.0 / total);
    }
    return out;
}

Tensor attend_head(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.ndim() != 2 || !k.same_dims(v) || k.cols() != q.cols()) {
        throw ShapeError("attend_head: Q " + q.dims_str() + " K " + k.dims_str() + " V " +
                         v.dims_str());
    }
    Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
    return matmul(softmax_rows(scores), v);
}

std::string LayerNames::wq(int head) const { return prefix + ".head" + std::to_string(head) + ".wq"; }
std::string LayerNames::wk(int head) const { return prefix + ".head" + std::to_string(head) + ".wk"; }
std::string LayerNames::wv(int head) const { return prefix + ".head" + std::to_string(head) + ".wv"; }
std::string LayerNames::wo() const { return prefix + ".wo"; }
std::string LayerNames::ln1_gamma() const { return prefix + ".ln1.gamma"; }
std::string LayerNames::ln1_beta() const { return prefix + ".ln1.beta"; }
std::string LayerNames::ln2_gamma() const { return prefix + ".ln2.gamma"; }
std::string LayerNames::ln2_beta() const { return prefix + ".ln2.beta"; }
std::string LayerNames::ffn_w1() const { return prefix + ".ffn.w1"; }
std::string LayerNames::ffn_b1() const { return prefix + ".ffn.b1"; }
std::string LayerNames::ffn_w2() const { return prefix + ".ffn.w2"; }
std::string LayerNames::ffn_b2() const { return prefix + ".ffn.b2"; }

Tape::NodeId taped_msa(Tape& tape, Tape::NodeId z, TemporalCache* cache, int layer_id,
                       ParamStore& params, const LayerNames& names, const PatchGrid& grid,
                       const STAConfig& cfg, int t, ForwardStats* stats) {
    cfg.validate();
    std::vector<Tape::NodeId> heads;
    heads.reserve(grid.heads);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(grid.head_dim()));
    for (int j = 0; j < grid.heads; ++j) {
        Tape::NodeId qn = tape.matmul(z, tape.param(params, names.wq(j)));
        Tape::NodeId kn = tape.matmul(z, tape.param(params, names.wk(j)));
        Tape::NodeId vn = tape.matmul(z, tape.param(params, names.wv(j)));
        if (stats) ++stats->qkv_projections;
        Tape::NodeId kf = kn;
        Tape::NodeId vf = vn;
        if (cache != nullptr) {
            const auto& slot = cache->slot(layer_id, j);
            check_window(slot, cfg, t);
            if (!slot.empty()) {
                // Cached frames enter the graph as constants: no gradient
                // flows into previous frames' K/V.
                Tensor ksum(tape.value(kn).dims, 0.0);
                Tensor vsum(tape.value(vn).dims, 0.0);
                double wsum = 0.0;
                weighted_cache_sum(slot, cfg, t, ksum, vsum, wsum);
                kf = tape.add_const(kn, std::move(ksum));
                vf = tape.add_const(vn, std::move(vsum));
                if (cfg.normalize) {
                    kf = tape.scale(kf, 1.0 / (1.0 + wsum));
                    vf = tape.scale(vf, 1.0 / (1.0 + wsum));
                }
            }
            cache->push(layer_id, j, tape.value(kn), tape.value(vn), t);
        }
        Tape::NodeId scores = tape.scale(tape.matmul_nt(qn, kf), inv_sqrt_d);
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vf));
    }
    Tape::NodeId cat = heads.size() == 1 ? heads[0] : tape.concat_cols(heads);
    return tape.matmul(cat, tape.param(params, names.wo()));
}

Tape::NodeId taped_encoder_block(Tape& tape, Tape::NodeId z, TemporalCache* cache, int layer_id,
                                 ParamStore& params, const LayerNames& names,
                                 const PatchGrid& grid, const STAConfig& cfg, int t,
                                 ForwardStats* stats) {
    Tape::NodeId attn = taped_msa(tape, z, cache, layer_id, params, names, grid, cfg, t, stats);
    Tape::NodeId z1 = tape.layer_norm(tape.add(z, attn), tape.param(params, names.ln1_gamma()),
                                      tape.param(params, names.ln1_beta()), kLayerNormEps);
    Tape::NodeId hidden = tape.gelu(tape.add_bias(
        tape.matmul(z1, tape.param(params, names.ffn_w1())), tape.param(params, names.ffn_b1())));
    Tape::NodeId ffn = tape.add_bias(tape.matmul(hidden, tape.param(params, names.ffn_w2())),
                                     tape.param(params, names.ffn_b2()));
    return tape.layer_norm(tape.add(z1, ffn), tape.param(params, names.ln2_gamma()),
                           tape.param(params, names.ln2_beta()), kLayerNormEps);
}

Tensor msa_forward(const Tensor& z, TemporalCache& cache, int layer_id, ParamStore& params,
                   const LayerNames& names, const PatchGrid& grid, const STAConfig& cfg, int t) {
    Tape tape;
    Tape::NodeId out =
        taped_msa(tape, tape.constant(z), &cache, layer_id, params, names, grid, cfg, t, nullptr);
    return tape.value(out);
}

Tensor encoder_block_forward(const Tensor& z, TemporalCache& cache, int layer_id,
                             ParamStore& params, const LayerNames& names, const PatchGrid& grid,
                             const STAConfig& cfg, int t) {
    Tape tape;
    Tape::NodeId out = taped_encoder_block(tape, tape.constant(z), &cache, layer_id, params, names,
                                           grid, cfg, t, nullptr);
    return tape.value(out);
}

} // namespace sta
