// SPDX-License-Identifier: Apache-2.0
//
// Release gate. Each numbered check prints exactly one PASS/FAIL line;
// the process exits nonzero if any check fails. Tolerances are pinned
// here, not configurable.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sta/ablate.hpp"
#include "sta/errors.hpp"
#include "sta/metrics.hpp"
#include "sta/model.hpp"
#include "sta/rng.hpp"
#include "sta/synth.hpp"
#include "sta/tensor_io.hpp"
#include "sta/train.hpp"

namespace fs = std::filesystem;
using sta::Model;
using sta::ModelConfig;
using sta::StageConfig;
using sta::Tensor;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
    std::printf("%s: criterion %d (%s)%s%s\n", ok ? "PASS" : "FAIL", id, name,
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

// ---------------------------------------------------------------------------
// Criterion 1: with T = 1 the streaming model must match a standard
// transformer encoder written out longhand below, sharing only parameter
// values and the Tensor container.

Tensor ref_matmul(const Tensor& a, const Tensor& b) {
    Tensor out({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor ref_softmax_rows(Tensor m) {
    for (int i = 0; i < m.rows(); ++i) {
        double mx = m.at(i, 0);
        for (int j = 1; j < m.cols(); ++j) mx = std::max(mx, m.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < m.cols(); ++j) {
            m.at(i, j) = std::exp(m.at(i, j) - mx);
            sum += m.at(i, j);
        }
        for (int j = 0; j < m.cols(); ++j) m.at(i, j) /= sum;
    }
    return m;
}

Tensor ref_layer_norm(const Tensor& m, const Tensor& gamma, const Tensor& beta, double eps) {
    Tensor out(m.dims);
    for (int i = 0; i < m.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < m.cols(); ++j) mean += m.at(i, j);
        mean /= m.cols();
        double var = 0.0;
        for (int j = 0; j < m.cols(); ++j) {
            const double d = m.at(i, j) - mean;
            var += d * d;
        }
        var /= m.cols();
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < m.cols(); ++j) {
            out.at(i, j) = (m.at(i, j) - mean) * rstd * gamma.data[j] + beta.data[j];
        }
    }
    return out;
}

// Softmax((Q K^T) / sqrt(d)) V with per-head projections, concatenation,
// output projection, post-norm residual blocks, and the bilinear decoder.
Tensor ref_forward_probs(const Model& model, const Tensor& frame) {
    const ModelConfig& cfg = model.cfg;
    const StageConfig& st = cfg.stages[0];
    const int gh = cfg.H / st.patch, gw = cfg.W / st.patch;
    const int tokens = gh * gw;
    const int flat = 3 * st.patch * st.patch;
    const int hd = st.dim / st.heads;
    const auto& P = model.params;

    Tensor patches({tokens, flat});
    for (int gr = 0; gr < gh; ++gr) {
        for (int gc = 0; gc < gw; ++gc) {
            int idx = 0;
            for (int pr = 0; pr < st.patch; ++pr) {
                for (int pc = 0; pc < st.patch; ++pc) {
                    for (int k = 0; k < 3; ++k) {
                        patches.at(gr * gw + gc, idx++) =
                            frame.at(gr * st.patch + pr, gc * st.patch + pc, k);
                    }
                }
            }
        }
    }

    Tensor z = ref_matmul(patches, P.value("stage0.embed.w"));
    for (int i = 0; i < tokens; ++i) {
        for (int j = 0; j < st.dim; ++j) z.at(i, j) += P.value("stage0.embed.b").data[j];
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
        z.data[i] += P.value("stage0.embed.pos").data[i];
    }

    for (int b = 0; b < st.blocks; ++b) {
        const std::string pre = "stage0.block" + std::to_string(b);
        Tensor cat({tokens, st.dim});
        for (int j = 0; j < st.heads; ++j) {
            const std::string hp = pre + ".head" + std::to_string(j);
            const Tensor q = ref_matmul(z, P.value(hp + ".wq"));
            const Tensor k = ref_matmul(z, P.value(hp + ".wk"));
            const Tensor v = ref_matmul(z, P.value(hp + ".wv"));
            Tensor scores({tokens, tokens});
            for (int r = 0; r < tokens; ++r) {
                for (int c = 0; c < tokens; ++c) {
                    double acc = 0.0;
                    for (int d = 0; d < hd; ++d) acc += q.at(r, d) * k.at(c, d);
                    scores.at(r, c) = acc;
                }
            }
            const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
            for (double& s : scores.data) s *= inv;
            const Tensor attn = ref_matmul(ref_softmax_rows(scores), v);
            for (int r = 0; r < tokens; ++r) {
                for (int d = 0; d < hd; ++d) cat.at(r, j * hd + d) = attn.at(r, d);
            }
        }
        const Tensor msa = ref_matmul(cat, P.value(pre + ".wo"));
        Tensor res = z;
        for (std::size_t i = 0; i < res.size(); ++i) res.data[i] += msa.data[i];
        z = ref_layer_norm(res, P.value(pre + ".ln1.gamma"), P.value(pre + ".ln1.beta"),
                           sta::kLayerNormEps);

        Tensor f = ref_matmul(z, P.value(pre + ".ffn.w1"));
        for (int i = 0; i < tokens; ++i) {
            for (int j = 0; j < f.cols(); ++j) f.at(i, j) += P.value(pre + ".ffn.b1").data[j];
        }
        for (double& v : f.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
        Tensor f2 = ref_matmul(f, P.value(pre + ".ffn.w2"));
        for (int i = 0; i < tokens; ++i) {
            for (int j = 0; j < f2.cols(); ++j) f2.at(i, j) += P.value(pre + ".ffn.b2").data[j];
        }
        Tensor res2 = z;
        for (std::size_t i = 0; i < res2.size(); ++i) res2.data[i] += f2.data[i];
        z = ref_layer_norm(res2, P.value(pre + ".ln2.gamma"), P.value(pre + ".ln2.beta"),
                           sta::kLayerNormEps);
    }

    Tensor d1 = ref_matmul(z, P.value("decoder.w1"));
    for (int i = 0; i < tokens; ++i) {
        for (int j = 0; j < d1.cols(); ++j) d1.at(i, j) += P.value("decoder.b1").data[j];
    }
    for (double& v : d1.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    Tensor tok = ref_matmul(d1, P.value("decoder.w2"));
    for (int i = 0; i < tokens; ++i) {
        for (int j = 0; j < tok.cols(); ++j) tok.at(i, j) += P.value("decoder.b2").data[j];
    }

    Tensor grid3({gh, gw, cfg.C});
    grid3.data = tok.data;
    Tensor up({cfg.H, cfg.W, cfg.C});
    const double sy = (cfg.H > 1 && gh > 1) ? static_cast<double>(gh - 1) / (cfg.H - 1) : 0.0;
    const double sx = (cfg.W > 1 && gw > 1) ? static_cast<double>(gw - 1) / (cfg.W - 1) : 0.0;
    for (int r = 0; r < cfg.H; ++r) {
        const double fy = r * sy;
        int y0 = static_cast<int>(fy);
        if (y0 > gh - 2) y0 = gh > 1 ? gh - 2 : 0;
        const double wy = gh > 1 ? fy - y0 : 0.0;
        const int y1 = gh > 1 ? y0 + 1 : y0;
        for (int c = 0; c < cfg.W; ++c) {
            const double fx = c * sx;
            int x0 = static_cast<int>(fx);
            if (x0 > gw - 2) x0 = gw > 1 ? gw - 2 : 0;
            const double wx = gw > 1 ? fx - x0 : 0.0;
            const int x1 = gw > 1 ? x0 + 1 : x0;
            for (int k = 0; k < cfg.C; ++k) {
                const double top =
                    grid3.at(y0, x0, k) * (1.0 - wx) + grid3.at(y0, x1, k) * wx;
                const double bot =
                    grid3.at(y1, x0, k) * (1.0 - wx) + grid3.at(y1, x1, k) * wx;
                up.at(r, c, k) = top * (1.0 - wy) + bot * wy;
            }
        }
    }

    for (int r = 0; r < cfg.H; ++r) {
        for (int c = 0; c < cfg.W; ++c) {
            double mx = up.at(r, c, 0);
            for (int k = 1; k < cfg.C; ++k) mx = std::max(mx, up.at(r, c, k));
            double sum = 0.0;
            for (int k = 0; k < cfg.C; ++k) {
                up.at(r, c, k) = std::exp(up.at(r, c, k) - mx);
                sum += up.at(r, c, k);
            }
            for (int k = 0; k < cfg.C; ++k) up.at(r, c, k) /= sum;
        }
    }
    return up;
}

void criterion_single_frame_reduction() {
    sta::Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg;
        const int patch = rng.uniform_int(0, 1) == 0 ? 2 : 4;
        cfg.H = patch * rng.uniform_int(2, 4);
        cfg.W = patch * rng.uniform_int(2, 4);
        cfg.C = rng.uniform_int(2, 5);
        StageConfig st;
        st.patch = patch;
        st.heads = 1 << rng.uniform_int(0, 2);
        st.dim = st.heads * (1 << rng.uniform_int(1, 2));
        st.blocks = rng.uniform_int(1, 2);
        cfg.stages = {st};
        cfg.decoder_dim = 4 * rng.uniform_int(1, 4);
        cfg.sta.T = 1;
        Model model(cfg);
        model.init_params(rng.next_u64());

        std::vector<Tensor> frames;
        for (int t = 0; t < 2; ++t) {
            Tensor f({cfg.H, cfg.W, 3});
            for (double& v : f.data) v = rng.uniform(0.0, 1.0);
            frames.push_back(std::move(f));
        }
        const auto preds = model.forward_sequence(frames);
        for (int t = 0; t < 2; ++t) {
            const Tensor ref = ref_forward_probs(model, frames[t]);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                worst = std::max(worst, std::abs(ref.data[i] - preds[t].probs.data[i]));
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max |diff| = %.3g over 20 instances", worst);
    report(1, "single-frame reduction", worst <= 1e-15, buf);
}

// ---------------------------------------------------------------------------
// Criterion 2: end-to-end finite-difference gradient check.

// Mean per-frame cross-entropy over the sequence, one tape, the shared
// cache evolving across frames exactly as in training. Cached K/V enter as
// constants, so the resulting gradient treats each frame's history as fixed.
double sequence_loss(Model& model, const std::vector<Tensor>& frames,
                     const std::vector<Tensor>& flat_labels, bool do_backward,
                     std::vector<sta::TemporalCache>* snaps) {
    sta::Tape tape;
    sta::TemporalCache cache = model.make_cache();
    cache.begin_sequence(1);
    std::vector<sta::Tape::NodeId> losses;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (snaps) snaps->push_back(cache);
        sta::FrameCtx ctx;
        ctx.t = static_cast<int>(i) + 1;
        ctx.sequence_id = 1;
        const auto logits = model.build_frame_logits(tape, frames[i], cache, ctx);
        const auto flat = tape.reshape(logits, {model.cfg.H * model.cfg.W, model.cfg.C});
        losses.push_back(tape.cross_entropy_logits(flat, flat_labels[i]));
    }
    auto total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = tape.add(total, losses[i]);
    total = tape.scale(total, 1.0 / static_cast<double>(losses.size()));
    if (do_backward) {
        model.params.zero_grads();
        tape.backward(total);
    }
    return tape.value(total).data[0];
}

// The same objective with every frame's cache state pinned to the snapshots
// taken under the base parameters. This is the function whose gradient the
// tape reports; finite differences of the evolving-cache loss would instead
// pick up the deliberately truncated history paths.
double frozen_history_loss(Model& model, const std::vector<Tensor>& frames,
                           const std::vector<Tensor>& flat_labels,
                           const std::vector<sta::TemporalCache>& snaps) {
    double total = 0.0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        sta::Tape tape;
        sta::TemporalCache cache = snaps[i];
        sta::FrameCtx ctx;
        ctx.t = static_cast<int>(i) + 1;
        ctx.sequence_id = 1;
        const auto logits = model.build_frame_logits(tape, frames[i], cache, ctx);
        const auto flat = tape.reshape(logits, {model.cfg.H * model.cfg.W, model.cfg.C});
        total += tape.value(tape.cross_entropy_logits(flat, flat_labels[i])).data[0];
    }
    return total / static_cast<double>(frames.size());
}

void criterion_gradient_integrity() {
    ModelConfig cfg;
    cfg.H = 16;
    cfg.W = 16;
    cfg.C = 3;
    StageConfig st;
    st.patch = 4;
    st.dim = 8;
    st.blocks = 1;
    st.heads = 2;
    cfg.stages = {st};
    cfg.decoder_dim = 8;
    cfg.sta.T = 2;
    Model model(cfg);
    model.init_params(2002);

    sta::SceneSpec spec;
    spec.H = 16;
    spec.W = 16;
    spec.C = 3;
    spec.length = 3;
    spec.seed = 17;
    sta::ShapeDef rect;
    rect.cls = 1;
    rect.y = 3;
    rect.x = 3;
    rect.h = 6;
    rect.w = 6;
    rect.vx = 1;
    sta::ShapeDef disk;
    disk.kind = sta::ShapeKind::Disk;
    disk.cls = 2;
    disk.y = 11;
    disk.x = 11;
    disk.radius = 3;
    disk.vy = -1;
    spec.shapes = {rect, disk};
    const sta::SequenceRecord rec = sta::generate_sequence(spec);
    std::vector<Tensor> flat_labels;
    for (const Tensor& l : rec.labels) {
        Tensor f({16 * 16});
        f.data = l.data;
        flat_labels.push_back(std::move(f));
    }

    std::vector<sta::TemporalCache> snaps;
    const double base = sequence_loss(model, rec.frames, flat_labels, true, &snaps);
    std::vector<std::string> names;
    for (const auto& [name, entry] : model.params) {
        if (entry.trainable) names.push_back(name);
    }
    std::map<std::string, Tensor> analytic;
    for (const auto& name : names) analytic.emplace(name, model.params.grad(name));
    const double agree = std::abs(frozen_history_loss(model, rec.frames, flat_labels, snaps) - base);
    if (agree > 1e-12) {
        report(2, "gradient integrity", false,
               "loss evaluators disagree at base point by " + std::to_string(agree));
        return;
    }

    sta::Rng rng(3003);
    std::set<std::pair<std::string, std::size_t>> picked;
    while (picked.size() < 50) {
        const std::string& name = names[rng.uniform_int(0, static_cast<int>(names.size()) - 1)];
        const std::size_t idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(model.params.value(name).size()) - 1));
        picked.insert({name, idx});
    }

    const double h = 1e-5;
    double worst = 0.0;
    for (const auto& [name, idx] : picked) {
        double& slot = model.params.value(name).data[idx];
        const double keep = slot;
        slot = keep + h;
        const double up = frozen_history_loss(model, rec.frames, flat_labels, snaps);
        slot = keep - h;
        const double down = frozen_history_loss(model, rec.frames, flat_labels, snaps);
        slot = keep;
        const double fd = (up - down) / (2.0 * h);
        const double got = analytic.at(name).data[idx];
        const double denom = std::max({std::abs(fd), std::abs(got), 1e-8});
        worst = std::max(worst, std::abs(fd - got) / denom);
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max rel err = %.3g over %zu params", worst, picked.size());
    report(2, "gradient integrity", worst < 1e-4, buf);
}

// ---------------------------------------------------------------------------
// Criterion 3: metric oracles.

void criterion_metric_oracles(const fs::path& corpus) {
    bool ok = true;
    std::string detail;

    sta::Rng rng(4004);
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const int C = rng.uniform_int(2, 6);
        Tensor gt({8, 8}), pred({8, 8});
        for (double& v : gt.data) {
            v = rng.uniform() < 0.1 ? 255.0 : static_cast<double>(rng.uniform_int(0, C - 1));
        }
        for (double& v : pred.data) {
            v = rng.uniform() < 0.05 ? 255.0 : static_cast<double>(rng.uniform_int(0, C - 1));
        }
        sta::ConfusionMatrix cm(C);
        sta::accumulate_confusion(pred, gt, C, cm);
        const std::vector<double> got = sta::per_class_iou(cm);
        double mean = 0.0;
        int counted = 0;
        for (int k = 0; k < C; ++k) {
            long long inter = 0, uni = 0;
            for (std::size_t i = 0; i < gt.size(); ++i) {
                if (gt.data[i] == 255.0 || pred.data[i] == 255.0) continue;
                const bool a = gt.data[i] == k, b = pred.data[i] == k;
                if (a && b) ++inter;
                if (a || b) ++uni;
            }
            if (uni == 0) {
                if (!std::isnan(got[k])) ok = false;
            } else {
                const double want = static_cast<double>(inter) / static_cast<double>(uni);
                if (got[k] != want) ok = false;
                mean += want;
                ++counted;
            }
        }
        if (counted > 0 && sta::miou(cm) != mean / counted) ok = false;
        if (!ok) detail = "brute-force mismatch at trial " + std::to_string(trial);
    }

    if (ok) {
        const sta::Dataset eval_data((corpus / "eval").string());
        const sta::EvalReport rep = sta::evaluate_labels(
            eval_data, [](int, const sta::SequenceRecord& rec) { return rec.labels; });
        if (rep.miou != 1.0 || rep.mtc != 1.0) {
            ok = false;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "oracle predictor miou=%.17g mtc=%.17g", rep.miou,
                          rep.mtc);
            detail = buf;
        } else {
            detail = "100 random maps exact; oracle predictor miou=1 mtc=1";
        }
    }
    report(3, "metric oracles", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 4: fusion algebra.

void criterion_fusion_algebra() {
    bool ok = true;
    std::string detail;
    sta::Rng rng(5005);
    const double lambda = 0.8;
    double worst = 0.0;
    for (int T = 1; T <= 5 && ok; ++T) {
        Tensor base({3, 4});
        for (double& v : base.data) v = rng.uniform(-1.0, 1.0);
        sta::QKV cur;
        cur.Q = base;
        cur.K = base;
        cur.V = base;
        cur.frame_index = T;
        std::deque<sta::CacheEntry> slot;
        for (int tau = 1; tau < T; ++tau) {
            slot.push_back(sta::CacheEntry{base, base, tau});
        }
        sta::STAConfig cfg;
        cfg.T = T;
        cfg.lambda = lambda;
        const sta::FusedQKV f = sta::fuse_temporal(cur, slot, cfg, T);
        const double factor = (1.0 - std::pow(lambda, T)) / (1.0 - lambda);
        for (std::size_t i = 0; i < base.size(); ++i) {
            worst = std::max(worst, std::abs(f.K.data[i] - base.data[i] * factor));
        }
    }
    if (worst > 1e-12) {
        ok = false;
        detail = "geometric closed form off by " + std::to_string(worst);
    }

    if (ok) {
        // Indicator probes: cached frame tau writes 1 into column tau-1, so
        // the fused row reads out the decay weights directly.
        const int T = 5, t = T;
        sta::QKV cur;
        cur.Q = Tensor({1, T - 1}, 0.0);
        cur.K = Tensor({1, T - 1}, 0.0);
        cur.V = Tensor({1, T - 1}, 0.0);
        cur.frame_index = t;
        std::deque<sta::CacheEntry> slot;
        for (int tau = 1; tau < T; ++tau) {
            Tensor k({1, T - 1}, 0.0);
            k.at(0, tau - 1) = 1.0;
            slot.push_back(sta::CacheEntry{k, k, tau});
        }
        sta::STAConfig cfg;
        cfg.T = T;
        cfg.lambda = lambda;
        const sta::FusedQKV f = sta::fuse_temporal(cur, slot, cfg, t);
        for (int tau = 1; tau < T; ++tau) {
            const double got = f.K.at(0, tau - 1);
            const double want = std::pow(lambda, t - tau);
            if (std::abs(got - want) > 1e-15) ok = false;
            if (tau > 1 && !(f.K.at(0, tau - 1) > f.K.at(0, tau - 2))) ok = false;
        }
        if (!ok) detail = "decay weights disordered";
    }
    if (ok) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "closed form within %.3g; weights strictly decay with age", worst);
        detail = buf;
    }
    report(4, "fusion algebra", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 5: temporal-context ablation trend.

void criterion_ablation_trend(const fs::path& corpus) {
    sta::RunConfig cfg;
    cfg.data_dir = corpus.string();
    cfg.out_dir = (corpus / "abl_out").string();
    // Protocol: the hottest recipe at which every cell trains stably within
    // the runtime budget. Seeds are the library defaults, fixed a priori.
    cfg.epochs = 3;
    cfg.lr = 0.0015;
    cfg.t_values = {1, 2, 3};
    cfg.seeds = {1, 2, 3};
    const sta::Dataset train_data((corpus / "train").string());
    const sta::Dataset eval_data((corpus / "eval").string());
    const sta::AblationReport rep = sta::run_ablation(cfg, train_data, eval_data, nullptr);
    const double m1 = rep.median_mtc[0], m2 = rep.median_mtc[1], m3 = rep.median_mtc[2];
    const bool ok = m2 > m1 && m3 >= m1 + 0.5 * (m2 - m1);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "median mtc: T1=%.4f T2=%.4f T3=%.4f", m1, m2, m3);
    report(5, "ablation trend", ok, buf);
}

// ---------------------------------------------------------------------------
// Criterion 6: analytic compute accounting.

void criterion_flop_accounting() {
    bool ok = true;
    std::string detail;

    ModelConfig tiny;
    tiny.H = 8;
    tiny.W = 8;
    tiny.C = 2;
    StageConfig st;
    st.patch = 4;
    st.dim = 8;
    st.heads = 2;
    st.blocks = 1;
    tiny.stages = {st};
    tiny.decoder_dim = 16;
    // Pre-registered hand counts for the tiny config.
    if (sta::count_flops(tiny, 1).total_macs() != 5504) {
        ok = false;
        detail = "tiny T=1 expected 5504, got " +
                 std::to_string(sta::count_flops(tiny, 1).total_macs());
    }
    if (ok && sta::count_flops(tiny, 3).total_macs() != 5760) {
        ok = false;
        detail = "tiny T=3 expected 5760, got " +
                 std::to_string(sta::count_flops(tiny, 3).total_macs());
    }

    const ModelConfig toy = ModelConfig::toy_default();
    const long long base = sta::count_flops(toy, 1).total_macs();
    const long long slope = sta::count_flops(toy, 2).total_macs() - base;
    for (int T = 2; T <= 5 && ok; ++T) {
        if (sta::count_flops(toy, T).total_macs() - base != slope * (T - 1)) {
            ok = false;
            detail = "overhead not linear at T=" + std::to_string(T);
        }
    }
    double pct = 0.0;
    if (ok) {
        const long long t3 = sta::count_flops(toy, 3).total_macs();
        pct = 100.0 * static_cast<double>(t3 - base) / static_cast<double>(base);
        if (!(pct < 30.0)) {
            ok = false;
            detail = "toy T=3 overhead " + std::to_string(pct) + "% exceeds 30%";
        }
    }
    if (ok) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "tiny counts exact; overhead linear; toy T=3 overhead %.2f%%", pct);
        detail = buf;
    }
    report(6, "flop accounting", ok, detail);
}

// ---------------------------------------------------------------------------
// Criterion 7: format round trips and corruption handling.

void criterion_format_round_trips(const fs::path& scratch) {
    bool ok = true;
    std::string detail;

    const fs::path data_dir = scratch / "rt_data";
    sta::CorpusConfig cc;
    cc.H = 16;
    cc.W = 16;
    cc.C = 3;
    cc.length = 4;
    sta::generate_dataset(cc, 2, 31, data_dir.string());
    // Reading and re-encoding every tensor file must reproduce it byte for
    // byte.
    for (const auto& entry : fs::recursive_directory_iterator(data_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".tns") continue;
        const Tensor t = sta::read_tns(entry.path().string());
        const fs::path copy = scratch / "rt_copy.tns";
        sta::write_tns(copy.string(), t, sta::peek_tns_dtype(entry.path().string()));
        std::ifstream fa(entry.path(), std::ios::binary);
        std::ifstream fb(copy, std::ios::binary);
        const std::string ba((std::istreambuf_iterator<char>(fa)),
                             std::istreambuf_iterator<char>());
        const std::string bb((std::istreambuf_iterator<char>(fb)),
                             std::istreambuf_iterator<char>());
        if (ba != bb) {
            ok = false;
            detail = "re-encode differs for " + entry.path().filename().string();
            break;
        }
    }

    if (ok) {
        ModelConfig cfg;
        cfg.H = 16;
        cfg.W = 16;
        cfg.C = 3;
        StageConfig st;
        st.patch = 4;
        st.dim = 8;
        st.heads = 2;
        st.blocks = 1;
        cfg.stages = {st};
        cfg.decoder_dim = 8;
        Model model(cfg);
        model.init_params(77);
        const fs::path d1 = scratch / "ck1";
        const fs::path d2 = scratch / "ck2";
        sta::save_checkpoint(model, d1.string());
        Model back = sta::load_checkpoint(d1.string());
        sta::save_checkpoint(back, d2.string());
        for (const auto& entry : fs::recursive_directory_iterator(d1)) {
            if (!entry.is_regular_file()) continue;
            const fs::path rel = fs::relative(entry.path(), d1);
            std::ifstream fa(entry.path(), std::ios::binary);
            std::ifstream fb(d2 / rel, std::ios::binary);
            const std::string ba((std::istreambuf_iterator<char>(fa)),
                                 std::istreambuf_iterator<char>());
            const std::string bb((std::istreambuf_iterator<char>(fb)),
                                 std::istreambuf_iterator<char>());
            if (!fb || ba != bb) {
                ok = false;
                detail = "checkpoint re-save differs for " + rel.string();
                break;
            }
        }
    }

    if (ok) {
        const fs::path victim = scratch / "victim.tns";
        sta::write_tns(victim.string(), Tensor({3, 3}, 1.0), sta::DType::F32);
        std::ifstream in(victim, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const auto expect_format_error = [&](std::string mutated, const char* what) {
            std::ofstream out(victim, std::ios::binary | std::ios::trunc);
            out.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
            out.close();
            try {
                sta::read_tns(victim.string());
            } catch (const sta::FormatError&) {
                return;
            } catch (...) {
            }
            ok = false;
            detail = std::string("corruption not rejected cleanly: ") + what;
        };
        expect_format_error(bytes.substr(0, bytes.size() - 5), "truncation");
        std::string bad_magic = bytes;
        bad_magic[0] = 'Z';
        expect_format_error(bad_magic, "magic");
        std::string bad_dtype = bytes;
        bad_dtype[5] = 99;
        expect_format_error(bad_dtype, "dtype");
        std::string bad_dim = bytes;
        bad_dim[8] = static_cast<char>(0xff);
        bad_dim[9] = static_cast<char>(0xff);
        bad_dim[10] = static_cast<char>(0xff);
        bad_dim[11] = 0x70;
        expect_format_error(bad_dim, "dim overflow");
        expect_format_error("", "empty file");
    }

    if (ok) detail = "dataset + checkpoint byte-stable; corrupt files rejected";
    report(7, "format round trips", ok, detail);
}

} // namespace

int main(int argc, char** argv) {
    // Optional args restrict the run to the listed criterion numbers;
    // ctest invokes with none, which runs all seven.
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    const auto selected = [&](int id) { return wanted.empty() || wanted.count(id); };

    const fs::path scratch = fs::temp_directory_path() / "sta_acceptance";
    fs::remove_all(scratch);
    fs::create_directories(scratch);

    const fs::path corpus = scratch / "corpus";
    if (selected(3) || selected(5)) {
        sta::CorpusConfig cc; // defaults: 200 train / 40 eval, 64x64, C=4
        sta::generate_corpus(cc, corpus.string());
    }

    int ran = 0;
    const auto guard = [&](int id, const char* name, auto&& fn) {
        if (!selected(id)) return;
        ++ran;
        try {
            fn();
        } catch (const std::exception& e) {
            report(id, name, false, std::string("exception: ") + e.what());
        }
    };

    guard(1, "single-frame reduction", [&] { criterion_single_frame_reduction(); });
    guard(2, "gradient integrity", [&] { criterion_gradient_integrity(); });
    guard(3, "metric oracles", [&] { criterion_metric_oracles(corpus); });
    guard(4, "fusion algebra", [&] { criterion_fusion_algebra(); });
    guard(6, "flop accounting", [&] { criterion_flop_accounting(); });
    guard(7, "format round trips", [&] { criterion_format_round_trips(scratch); });
    guard(5, "ablation trend", [&] { criterion_ablation_trend(corpus); });

    fs::remove_all(scratch);
    if (g_failures > 0) {
        std::printf("ACCEPTANCE: %d of %d criteria failed\n", g_failures, ran);
        return 1;
    }
    std::printf("ACCEPTANCE: all %d selected criteria passed\n", ran);
    return 0;
}
