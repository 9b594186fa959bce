// SPDX-License-Identifier: Apache-2.0
#include "sta/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sta/errors.hpp"
#include "sta/linalg.hpp"
#include "sta/rng.hpp"
#include "sta/tensor_io.hpp"

namespace sta {

void ModelConfig::validate() const {
    if (C < 2) throw ContractError("ModelConfig: C must be >= 2, got " + std::to_string(C));
    if (stages.empty()) throw ContractError("ModelConfig: at least one stage required");
    if (decoder_dim < 1) throw ContractError("ModelConfig: decoder_dim must be >= 1");
    sta.validate();
    int h = H, w = W, ch = 3;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        PatchGrid g;
        g.H = h;
        g.W = w;
        g.P = stages[s].patch;
        g.channels = ch;
        g.dim = stages[s].dim;
        g.heads = stages[s].heads;
        g.validate();
        if (stages[s].blocks < 1) {
            throw ContractError("ModelConfig: stage " + std::to_string(s) + " has no blocks");
        }
        h /= stages[s].patch;
        w /= stages[s].patch;
        ch = stages[s].dim;
    }
}

ModelConfig ModelConfig::toy_default() {
    ModelConfig cfg;
    cfg.H = 64;
    cfg.W = 64;
    cfg.C = 4;
    cfg.stages = {StageConfig{}};
    cfg.decoder_dim = 64;
    return cfg;
}

long long FlopReport::total_macs() const {
    return embedding + qkv + attn_scores + attn_values + fusion + out_proj + ffn + decoder;
}

FlopReport count_flops(const ModelConfig& cfg, int T) {
    cfg.validate();
    if (T < 1) throw ContractError("count_flops: T must be >= 1");
    FlopReport r;
    int h = cfg.H, w = cfg.W, ch = 3;
    long long l_final = 0, dim_final = 0;
    for (const auto& st : cfg.stages) {
        const long long L = static_cast<long long>(h / st.patch) * (w / st.patch);
        const long long d = st.dim;
        r.embedding += L * (static_cast<long long>(ch) * st.patch * st.patch) * d;
        r.qkv += st.blocks * 3 * L * d * d;
        r.attn_scores += st.blocks * L * L * d;
        r.attn_values += st.blocks * L * L * d;
        r.out_proj += st.blocks * L * d * d;
        r.ffn += st.blocks * 8 * L * d * d;
        if (st.sta_enabled) {
            // One multiply-add per element per cached frame, for K and V.
            r.fusion += st.blocks * 2LL * (T - 1) * L * (d / st.heads) * st.heads * 2;
        }
        h /= st.patch;
        w /= st.patch;
        ch = st.dim;
        l_final = L;
        dim_final = d;
    }
    r.decoder = l_final * dim_final * cfg.decoder_dim +
                l_final * static_cast<long long>(cfg.decoder_dim) * cfg.C;
    return r;
}

Model::Model(ModelConfig config) : cfg(std::move(config)) {
    cfg.validate();
    register_params();
}

int Model::total_blocks() const {
    int n = 0;
    for (const auto& s : cfg.stages) n += s.blocks;
    return n;
}

int Model::max_heads() const {
    int n = 1;
    for (const auto& s : cfg.stages) n = std::max(n, s.heads);
    return n;
}

PatchGrid Model::stage_grid(int s) const {
    if (s < 0 || s >= static_cast<int>(cfg.stages.size())) {
        throw ContractError("stage_grid: stage " + std::to_string(s) + " out of range");
    }
    PatchGrid g;
    g.H = cfg.H;
    g.W = cfg.W;
    g.channels = 3;
    for (int i = 0; i < s; ++i) {
        g.H /= cfg.stages[i].patch;
        g.W /= cfg.stages[i].patch;
        g.channels = cfg.stages[i].dim;
    }
    g.P = cfg.stages[s].patch;
    g.dim = cfg.stages[s].dim;
    g.heads = cfg.stages[s].heads;
    return g;
}

namespace {

std::string stage_prefix(int s) { return "stage" + std::to_string(s); }

LayerNames layer_names(int s, int b) {
    LayerNames n;
    n.prefix = stage_prefix(s) + ".block" + std::to_string(b);
    return n;
}

} // namespace

void Model::register_params() {
    for (int s = 0; s < static_cast<int>(cfg.stages.size()); ++s) {
        const PatchGrid g = stage_grid(s);
        const int flat = g.channels * g.P * g.P;
        params.add(stage_prefix(s) + ".embed.w", Tensor({flat, g.dim}));
        params.add(stage_prefix(s) + ".embed.b", Tensor({g.dim}));
        params.add(stage_prefix(s) + ".embed.pos", Tensor({g.tokens(), g.dim}));
        for (int b = 0; b < cfg.stages[s].blocks; ++b) {
            const LayerNames n = layer_names(s, b);
            for (int j = 0; j < g.heads; ++j) {
                params.add(n.wq(j), Tensor({g.dim, g.head_dim()}));
                params.add(n.wk(j), Tensor({g.dim, g.head_dim()}));
                params.add(n.wv(j), Tensor({g.dim, g.head_dim()}));
            }
            params.add(n.wo(), Tensor({g.dim, g.dim}));
            params.add(n.ln1_gamma(), Tensor({g.dim}));
            params.add(n.ln1_beta(), Tensor({g.dim}));
            params.add(n.ln2_gamma(), Tensor({g.dim}));
            params.add(n.ln2_beta(), Tensor({g.dim}));
            params.add(n.ffn_w1(), Tensor({g.dim, 4 * g.dim}));
            params.add(n.ffn_b1(), Tensor({4 * g.dim}));
            params.add(n.ffn_w2(), Tensor({4 * g.dim, g.dim}));
            params.add(n.ffn_b2(), Tensor({g.dim}));
        }
    }
    const PatchGrid last = stage_grid(static_cast<int>(cfg.stages.size()) - 1);
    params.add("decoder.w1", Tensor({last.dim, cfg.decoder_dim}));
    params.add("decoder.b1", Tensor({cfg.decoder_dim}));
    params.add("decoder.w2", Tensor({cfg.decoder_dim, cfg.C}));
    params.add("decoder.b2", Tensor({cfg.C}));
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Fan-in of the matching weight matrix; biases share their layer's fan-in.
int init_fan_in(const std::string& name, const ParamStore& params) {
    if (ends_with(name, ".b")) return params.value(name.substr(0, name.size() - 1) + "w").rows();
    if (ends_with(name, ".b1")) return params.value(name.substr(0, name.size() - 2) + "w1").rows();
    if (ends_with(name, ".b2")) return params.value(name.substr(0, name.size() - 2) + "w2").rows();
    return params.value(name).rows();
}

} // namespace

void Model::init_params(std::uint64_t seed) {
    for (auto& [name, entry] : params) {
        // Per-name substream: init is independent of enumeration order.
        Rng rng(seed ^ fnv1a64(name));
        Tensor& v = entry.value;
        if (ends_with(name, ".pos") || ends_with(name, ".beta")) {
            std::fill(v.data.begin(), v.data.end(), 0.0);
        } else if (ends_with(name, ".gamma")) {
            std::fill(v.data.begin(), v.data.end(), 1.0);
        } else {
            const double s = 1.0 / std::sqrt(static_cast<double>(init_fan_in(name, params)));
            for (double& x : v.data) x = rng.uniform(-s, s);
        }
    }
}

TemporalCache Model::make_cache() const {
    return TemporalCache(total_blocks(), max_heads(), cfg.sta.T - 1);
}

Tape::NodeId Model::taped_decoder(Tape& tape, Tape::NodeId tokens) {
    const PatchGrid last = stage_grid(static_cast<int>(cfg.stages.size()) - 1);
    Tape::NodeId d1 = tape.gelu(tape.add_bias(tape.matmul(tokens, tape.param(params, "decoder.w1")),
                                              tape.param(params, "decoder.b1")));
    Tape::NodeId tok_logits = tape.add_bias(tape.matmul(d1, tape.param(params, "decoder.w2")),
                                            tape.param(params, "decoder.b2"));
    Tape::NodeId grid3 = tape.reshape(tok_logits, {last.grid_h(), last.grid_w(), cfg.C});
    return tape.bilinear_upsample(grid3, cfg.H, cfg.W);
}

Tape::NodeId Model::build_frame_logits(Tape& tape, const Tensor& frame, TemporalCache& cache,
                                       const FrameCtx& ctx) {
    if (frame.ndim() != 3 || frame.dims[0] != cfg.H || frame.dims[1] != cfg.W ||
        frame.dims[2] != 3) {
        throw ShapeError("forward: frame " + frame.dims_str() + " vs config " +
                         std::to_string(cfg.H) + "x" + std::to_string(cfg.W) + "x3");
    }
    if (cache.capacity() != cfg.sta.T - 1) {
        throw ContractError("forward: cache capacity " + std::to_string(cache.capacity()) +
                            " does not match T-1 = " + std::to_string(cfg.sta.T - 1));
    }
    if (ctx.sequence_id != cache.sequence_id()) {
        throw CacheError("forward: stale cache (sequence " + std::to_string(cache.sequence_id()) +
                         ", expected " + std::to_string(ctx.sequence_id) + ")");
    }
    if (ctx.t != cache.frames_seen() + 1) {
        throw CacheError("forward: cache ends at frame " + std::to_string(cache.frames_seen()) +
                         ", cannot evaluate frame " + std::to_string(ctx.t));
    }
    Tape::NodeId x = tape.constant(frame);
    Tape::NodeId z = 0;
    int layer_id = 0;
    for (int s = 0; s < static_cast<int>(cfg.stages.size()); ++s) {
        const PatchGrid g = stage_grid(s);
        if (s > 0) x = tape.reshape(z, {g.H, g.W, g.channels});
        Tape::NodeId patches = tape.extract_patches(x, g.P);
        z = tape.add_bias(tape.matmul(patches, tape.param(params, stage_prefix(s) + ".embed.w")),
                          tape.param(params, stage_prefix(s) + ".embed.b"));
        z = tape.add(z, tape.param(params, stage_prefix(s) + ".embed.pos"));
        for (int b = 0; b < cfg.stages[s].blocks; ++b) {
            TemporalCache* c = cfg.stages[s].sta_enabled ? &cache : nullptr;
            z = taped_encoder_block(tape, z, c, layer_id, params, layer_names(s, b), g, cfg.sta,
                                    ctx.t, &stats);
            ++layer_id;
        }
    }
    cache.advance();
    return taped_decoder(tape, z);
}

Prediction Model::forward_frame(const Tensor& frame, TemporalCache& cache) {
    return forward_frame(frame, cache, FrameCtx{cache.frames_seen() + 1, cache.sequence_id()});
}

Prediction Model::forward_frame(const Tensor& frame, TemporalCache& cache, const FrameCtx& ctx) {
    Tape tape;
    Tape::NodeId logits = build_frame_logits(tape, frame, cache, ctx);
    Prediction p;
    p.probs = softmax_channels(tape.value(logits));
    p.labels = argmax_channels(p.probs);
    p.frame_index = ctx.t;
    return p;
}

std::vector<Prediction> Model::forward_sequence(const std::vector<Tensor>& frames) {
    if (frames.empty()) throw ContractError("forward_sequence: empty frame list");
    TemporalCache cache = make_cache();
    cache.begin_sequence(next_sequence_id_++);
    stats = ForwardStats{};
    std::vector<Prediction> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        out.push_back(forward_frame(frames[i], cache,
                                    FrameCtx{static_cast<int>(i) + 1, cache.sequence_id()}));
    }
    return out;
}

Tensor Model::decode_features(const Tensor& tokens) {
    const PatchGrid last = stage_grid(static_cast<int>(cfg.stages.size()) - 1);
    if (tokens.ndim() != 2 || tokens.rows() != last.tokens() || tokens.cols() != last.dim) {
        throw ShapeError("decode_features: tokens " + tokens.dims_str() + " vs grid [" +
                         std::to_string(last.tokens()) + " x " + std::to_string(last.dim) + "]");
    }
    Tape tape;
    Tape::NodeId out = taped_decoder(tape, tape.constant(tokens));
    return tape.value(out);
}

void save_checkpoint(const Model& model, const std::string& dir) {
    if (model.cfg.stages.size() != 1) {
        throw ContractError("save_checkpoint: only single-stage models serialize");
    }
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "params");
    const StageConfig& st = model.cfg.stages[0];
    nlohmann::ordered_json j;
    j["H"] = model.cfg.H;
    j["W"] = model.cfg.W;
    j["classes"] = model.cfg.C;
    j["patch"] = st.patch;
    j["dim"] = st.dim;
    j["heads"] = st.heads;
    j["blocks"] = st.blocks;
    j["decoder_dim"] = model.cfg.decoder_dim;
    j["T"] = model.cfg.sta.T;
    j["lambda"] = model.cfg.sta.lambda;
    j["normalize"] = model.cfg.sta.normalize;
    std::ofstream out(fs::path(dir) / "config.json");
    if (!out) throw FormatError("save_checkpoint: cannot write " + dir + "/config.json");
    out << j.dump(2) << "\n";
    out.close();
    for (const auto& [name, entry] : model.params) {
        write_tns((fs::path(dir) / "params" / (name + ".tns")).string(), entry.value, DType::F64);
    }
}

Model load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string cfg_path = (fs::path(dir) / "config.json").string();
    std::ifstream in(cfg_path);
    if (!in) throw FormatError("load_checkpoint: cannot open " + cfg_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_checkpoint: " + cfg_path + ": " + e.what());
    }
    const std::vector<std::string> keys = {"H",      "W",          "classes", "patch",
                                           "dim",    "heads",      "blocks",  "decoder_dim",
                                           "T",      "lambda",     "normalize"};
    for (const auto& k : keys) {
        if (!j.contains(k)) throw FormatError("load_checkpoint: missing key \"" + k + "\"");
    }
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            throw FormatError("load_checkpoint: unknown key \"" + k + "\"");
        }
    }
    ModelConfig cfg;
    try {
        cfg.H = j.at("H").get<int>();
        cfg.W = j.at("W").get<int>();
        cfg.C = j.at("classes").get<int>();
        StageConfig st;
        st.patch = j.at("patch").get<int>();
        st.dim = j.at("dim").get<int>();
        st.heads = j.at("heads").get<int>();
        st.blocks = j.at("blocks").get<int>();
        st.sta_enabled = true;
        cfg.stages = {st};
        cfg.decoder_dim = j.at("decoder_dim").get<int>();
        cfg.sta.T = j.at("T").get<int>();
        cfg.sta.lambda = j.at("lambda").get<double>();
        cfg.sta.normalize = j.at("normalize").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_checkpoint: bad value in " + cfg_path + ": " + e.what());
    }
    Model model(cfg);
    for (auto& [name, entry] : model.params) {
        const std::string path = (fs::path(dir) / "params" / (name + ".tns")).string();
        Tensor loaded = read_tns(path);
        if (!loaded.same_dims(entry.value)) {
            throw FormatError("load_checkpoint: " + path + " dims " + loaded.dims_str() +
                              " vs expected " + entry.value.dims_str());
        }
        entry.value = std::move(loaded);
    }
    return model;
}

} // namespace sta
