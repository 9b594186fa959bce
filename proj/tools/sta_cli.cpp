// SPDX-License-Identifier: Apache-2.0
//
// Batch entry points: generate, train, predict, eval, ablate, flops.
// Exit codes: 0 success, 2 usage/config error, 3 data/format error,
// 4 numerical failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sta/ablate.hpp"
#include "sta/errors.hpp"
#include "sta/model.hpp"
#include "sta/run_config.hpp"
#include "sta/synth.hpp"
#include "sta/tensor_io.hpp"
#include "sta/train.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Options shared by the config-driven subcommands. The JSON file loads
// first; flags the user passed then override single fields.
void add_run_config_options(CLI::App* sub, sta::RunConfig& cfg, std::string& config_path) {
    sub->add_option("--config", config_path, "JSON config file; flags override its values");
    sub->add_option("--data_dir", cfg.data_dir, "corpus root with train/ and eval/ subdirs");
    sub->add_option("--out_dir", cfg.out_dir, "output directory");
    sub->add_option("--T", cfg.T, "temporal context length in frames");
    sub->add_option("--lambda", cfg.lambda, "temporal decay factor in (0, 1]");
    sub->add_option("--patch", cfg.patch, "patch side in pixels");
    sub->add_option("--dim", cfg.dim, "embedding dimension");
    sub->add_option("--heads", cfg.heads, "attention heads");
    sub->add_option("--blocks", cfg.blocks, "encoder blocks");
    sub->add_option("--decoder_dim", cfg.decoder_dim, "decoder hidden dimension");
    sub->add_option("--classes", cfg.classes, "class count");
    sub->add_option("--epochs", cfg.epochs, "training epochs");
    sub->add_option("--lr", cfg.lr, "learning rate");
    sub->add_option("--seed", cfg.seed, "training and init seed");
    sub->add_option("--t_values", cfg.t_values, "ablation T values")->delimiter(',');
    sub->add_option("--seeds", cfg.seeds, "ablation seeds")->delimiter(',');
}

// The config file must load before CLI11 applies flag overrides, so the
// path is picked out of argv up front.
std::string prescan_config_path(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    }
    return "";
}

void echo_config(const char* command, const sta::RunConfig& cfg,
                 const std::vector<std::pair<std::string, ordered_json>>& extra = {}) {
    ordered_json out;
    out["command"] = command;
    for (const auto& [k, v] : extra) out[k] = v;
    const ordered_json j = ordered_json::parse(cfg.to_json());
    for (const auto& [k, v] : j.items()) out[k] = v;
    std::cout << out.dump() << "\n";
}

sta::ModelConfig model_config_from(const sta::RunConfig& cfg, int H, int W) {
    sta::ModelConfig mc;
    mc.H = H;
    mc.W = W;
    mc.C = cfg.classes;
    sta::StageConfig st;
    st.patch = cfg.patch;
    st.dim = cfg.dim;
    st.heads = cfg.heads;
    st.blocks = cfg.blocks;
    st.sta_enabled = true;
    mc.stages = {st};
    mc.decoder_dim = cfg.decoder_dim;
    mc.sta.T = cfg.T;
    mc.sta.lambda = cfg.lambda;
    return mc;
}

void check_classes(const sta::RunConfig& cfg, const sta::DatasetManifest& manifest) {
    if (cfg.classes != manifest.C) {
        throw sta::ContractError("config: classes " + std::to_string(cfg.classes) +
                                 " does not match dataset classes " + std::to_string(manifest.C));
    }
}

struct GenerateOpts {
    std::string out;
    int seqs = 200;
    int length = 8;
    std::string size = "64x64";
    int classes = 4;
    std::uint64_t seed = 0;
    double amp = 0.25;
    double annotated_fraction = 1.0;
};

void cmd_generate(const GenerateOpts& o) {
    int w = 0, h = 0;
    if (std::sscanf(o.size.c_str(), "%dx%d", &w, &h) != 2 || w < 1 || h < 1) {
        throw sta::ContractError("generate: --size must be WxH, got \"" + o.size + "\"");
    }
    if (o.seqs < 1 || o.length < 1) {
        throw sta::ContractError("generate: --seqs and --length must be positive");
    }
    if (!(o.annotated_fraction >= 0.0 && o.annotated_fraction <= 1.0)) {
        throw sta::ContractError("generate: --annotated-fraction must be in [0, 1]");
    }
    ordered_json echo;
    echo["command"] = "generate";
    echo["out"] = o.out;
    echo["seqs"] = o.seqs;
    echo["length"] = o.length;
    echo["size"] = o.size;
    echo["classes"] = o.classes;
    echo["seed"] = o.seed;
    echo["amp"] = o.amp;
    echo["annotated_fraction"] = o.annotated_fraction;
    std::cout << echo.dump() << "\n";

    sta::CorpusConfig cfg;
    cfg.length = o.length;
    cfg.H = h;
    cfg.W = w;
    cfg.C = o.classes;
    cfg.texture_amp = o.amp;
    cfg.annotated_fraction = o.annotated_fraction;
    cfg.seed = o.seed;
    sta::generate_dataset(cfg, o.seqs, o.seed * 0x9e3779b97f4a7c15ULL + 1, o.out);
    std::ifstream manifest(fs::path(o.out) / "manifest.json");
    std::cout << manifest.rdbuf();
}

void cmd_train(const sta::RunConfig& cfg, bool resume) {
    cfg.validate();
    echo_config("train", cfg, {{"resume", resume}});
    sta::Dataset train_data((fs::path(cfg.data_dir) / "train").string());
    check_classes(cfg, train_data.manifest());
    const sta::ModelConfig mc =
        model_config_from(cfg, train_data.manifest().H, train_data.manifest().W);

    sta::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.lr = cfg.lr;
    tc.seed = cfg.seed;

    if (resume) {
        sta::Model model = sta::load_checkpoint(cfg.out_dir);
        if (!(model.cfg == mc)) {
            throw sta::ContractError("train: checkpoint in " + cfg.out_dir +
                                     " does not match the requested config");
        }
        sta::Trainer trainer(model, tc);
        trainer.load_state(cfg.out_dir);
        std::ofstream log(fs::path(cfg.out_dir) / "train_log.jsonl", std::ios::app);
        trainer.train(train_data, &log);
        sta::save_checkpoint(model, cfg.out_dir);
        trainer.save_state(cfg.out_dir);
        ordered_json done;
        done["status"] = "ok";
        done["epochs"] = trainer.completed_epochs();
        done["steps"] = trainer.global_step();
        std::cout << done.dump() << "\n";
        return;
    }

    sta::Model model(mc);
    model.init_params(cfg.seed);
    sta::Trainer trainer(model, tc);
    fs::create_directories(cfg.out_dir);
    std::ofstream log(fs::path(cfg.out_dir) / "train_log.jsonl", std::ios::trunc);
    trainer.train(train_data, &log);
    sta::save_checkpoint(model, cfg.out_dir);
    trainer.save_state(cfg.out_dir);
    ordered_json done;
    done["status"] = "ok";
    done["epochs"] = trainer.completed_epochs();
    done["steps"] = trainer.global_step();
    std::cout << done.dump() << "\n";
}

struct PredictOpts {
    std::string checkpoint;
    std::string data;
    std::string out;
    bool oracle = false;
};

void cmd_predict(const PredictOpts& o) {
    ordered_json echo;
    echo["command"] = "predict";
    echo["checkpoint"] = o.checkpoint;
    echo["data"] = o.data;
    echo["out"] = o.out;
    echo["oracle"] = o.oracle;
    std::cout << echo.dump() << "\n";

    sta::Dataset data(o.data);
    std::unique_ptr<sta::Model> model;
    if (!o.oracle) {
        if (o.checkpoint.empty()) {
            throw sta::ContractError("predict: --checkpoint required unless --oracle");
        }
        model = std::make_unique<sta::Model>(sta::load_checkpoint(o.checkpoint));
        if (model->cfg.H != data.manifest().H || model->cfg.W != data.manifest().W ||
            model->cfg.C != data.manifest().C) {
            throw sta::ContractError("predict: checkpoint geometry does not match the dataset");
        }
    }
    for (int i = 0; i < data.size(); ++i) {
        const sta::SequenceRecord rec = data.load(i);
        const std::string& id = data.manifest().sequences[i].id;
        const fs::path sdir = fs::path(o.out) / id;
        fs::create_directories(sdir);
        std::vector<sta::Tensor> preds;
        if (o.oracle) {
            preds = rec.labels;
        } else {
            for (const sta::Prediction& p : model->forward_sequence(rec.frames)) {
                preds.push_back(p.labels);
            }
        }
        for (std::size_t t = 0; t < preds.size(); ++t) {
            char name[32];
            std::snprintf(name, sizeof(name), "pred_%04zu.tns", t + 1);
            sta::write_tns((sdir / name).string(), preds[t], sta::DType::U8);
        }
    }
    ordered_json done;
    done["status"] = "ok";
    done["sequences"] = data.size();
    std::cout << done.dump() << "\n";
}

struct EvalOpts {
    std::string data;
    std::string pred;
    std::string out;
};

void cmd_eval(const EvalOpts& o) {
    ordered_json echo;
    echo["command"] = "eval";
    echo["data"] = o.data;
    echo["pred"] = o.pred;
    echo["out"] = o.out;
    std::cout << echo.dump() << "\n";

    sta::Dataset data(o.data);
    const sta::EvalReport report = sta::evaluate_prediction_dir(data, o.pred);
    const std::string json = report.to_json();
    std::cout << json << "\n";
    if (!o.out.empty()) {
        fs::create_directories(fs::path(o.out).parent_path().empty()
                                   ? fs::path(".")
                                   : fs::path(o.out).parent_path());
        std::ofstream f(o.out);
        if (!f) throw sta::FormatError("eval: cannot write " + o.out);
        f << json << "\n";
    }
}

void cmd_ablate(const sta::RunConfig& cfg) {
    cfg.validate();
    echo_config("ablate", cfg);
    sta::Dataset train_data((fs::path(cfg.data_dir) / "train").string());
    sta::Dataset eval_data((fs::path(cfg.data_dir) / "eval").string());
    check_classes(cfg, train_data.manifest());
    const sta::AblationReport report =
        sta::run_ablation(cfg, train_data, eval_data, &std::cerr);
    std::cout << report.to_table();
    std::cout << report.to_json() << "\n";
    fs::create_directories(cfg.out_dir);
    std::ofstream f(fs::path(cfg.out_dir) / "ablation.json");
    if (!f) throw sta::FormatError("ablate: cannot write " + cfg.out_dir + "/ablation.json");
    f << report.to_json() << "\n";
}

ordered_json flop_json(const sta::FlopReport& r) {
    ordered_json j;
    j["embedding"] = r.embedding;
    j["qkv"] = r.qkv;
    j["attn_scores"] = r.attn_scores;
    j["attn_values"] = r.attn_values;
    j["fusion"] = r.fusion;
    j["out_proj"] = r.out_proj;
    j["ffn"] = r.ffn;
    j["decoder"] = r.decoder;
    j["total_macs"] = r.total_macs();
    j["total_flops"] = r.total_flops();
    return j;
}

void cmd_flops(const sta::RunConfig& cfg, int H, int W) {
    cfg.validate();
    echo_config("flops", cfg, {{"H", H}, {"W", W}});
    const sta::ModelConfig mc = model_config_from(cfg, H, W);
    const sta::FlopReport rep = sta::count_flops(mc, cfg.T);
    const sta::FlopReport base = sta::count_flops(mc, 1);
    ordered_json j;
    j["T"] = cfg.T;
    j["report"] = flop_json(rep);
    j["baseline"] = flop_json(base);
    j["overhead_percent"] = 100.0 *
                            static_cast<double>(rep.total_macs() - base.total_macs()) /
                            static_cast<double>(base.total_macs());
    std::cout << j.dump(2) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Temporal attention video segmenter"};
    app.require_subcommand(1);

    sta::RunConfig cfg;
    std::string config_path;
    try {
        cfg = sta::load_run_config(prescan_config_path(argc, argv));
    } catch (const sta::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    GenerateOpts gen;
    CLI::App* sub_gen = app.add_subcommand("generate", "Write a synthetic dataset");
    sub_gen->add_option("--out", gen.out, "dataset directory")->required();
    sub_gen->add_option("--seqs", gen.seqs, "sequence count");
    sub_gen->add_option("--length", gen.length, "frames per sequence");
    sub_gen->add_option("--size", gen.size, "frame size WxH");
    sub_gen->add_option("--classes", gen.classes, "class count");
    sub_gen->add_option("--seed", gen.seed, "generator seed");
    sub_gen->add_option("--amp", gen.amp, "texture noise amplitude in [0, 0.25]");
    sub_gen->add_option("--annotated-fraction", gen.annotated_fraction,
                        "fraction of frames keeping labels");

    bool resume = false;
    CLI::App* sub_train = app.add_subcommand("train", "Train a model on data_dir/train");
    add_run_config_options(sub_train, cfg, config_path);
    sub_train->add_flag("--resume", resume, "continue from the checkpoint in out_dir");

    PredictOpts pred;
    CLI::App* sub_pred = app.add_subcommand("predict", "Write per-frame label predictions");
    sub_pred->add_option("--checkpoint", pred.checkpoint, "checkpoint directory");
    sub_pred->add_option("--data", pred.data, "dataset directory")->required();
    sub_pred->add_option("--out", pred.out, "prediction directory")->required();
    sub_pred->add_flag("--oracle", pred.oracle, "write ground-truth labels as predictions");

    EvalOpts ev;
    CLI::App* sub_eval = app.add_subcommand("eval", "Score predictions against a dataset");
    sub_eval->add_option("--data", ev.data, "dataset directory")->required();
    sub_eval->add_option("--pred", ev.pred, "prediction directory")->required();
    sub_eval->add_option("--out", ev.out, "also write the JSON report here");

    CLI::App* sub_abl = app.add_subcommand("ablate", "Train and evaluate per (T, seed)");
    add_run_config_options(sub_abl, cfg, config_path);

    int flops_h = 64, flops_w = 64;
    CLI::App* sub_flops = app.add_subcommand("flops", "Analytic per-frame compute report");
    add_run_config_options(sub_flops, cfg, config_path);
    sub_flops->add_option("--H", flops_h, "input height");
    sub_flops->add_option("--W", flops_w, "input width");

    try {
        app.parse(argc, argv);
        if (sub_gen->parsed()) cmd_generate(gen);
        if (sub_train->parsed()) cmd_train(cfg, resume);
        if (sub_pred->parsed()) cmd_predict(pred);
        if (sub_eval->parsed()) cmd_eval(ev);
        if (sub_abl->parsed()) cmd_ablate(cfg);
        if (sub_flops->parsed()) cmd_flops(cfg, flops_h, flops_w);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const sta::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const sta::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const sta::UndefinedMetricError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
