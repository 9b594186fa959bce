// SPDX-License-Identifier: Apache-2.0
#include "sta/run_config.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "sta/errors.hpp"

namespace sta {

void RunConfig::validate() const {
    if (T < 1) throw ContractError("config: T must be >= 1");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ContractError("config: lambda must be in (0, 1]");
    if (patch < 1 || dim < 1 || heads < 1 || blocks < 1 || decoder_dim < 1) {
        throw ContractError("config: model dims must be positive");
    }
    if (dim % heads != 0) throw ContractError("config: heads must divide dim");
    if (classes < 2) throw ContractError("config: classes must be >= 2");
    if (epochs < 1) throw ContractError("config: epochs must be >= 1");
    if (!(lr > 0.0)) throw ContractError("config: lr must be positive");
    if (t_values.empty()) throw ContractError("config: t_values must be nonempty");
    for (int t : t_values) {
        if (t < 1) throw ContractError("config: t_values entries must be >= 1");
    }
    if (seeds.empty()) throw ContractError("config: seeds must be nonempty");
}

std::string RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    j["T"] = T;
    j["lambda"] = lambda;
    j["patch"] = patch;
    j["dim"] = dim;
    j["heads"] = heads;
    j["blocks"] = blocks;
    j["decoder_dim"] = decoder_dim;
    j["classes"] = classes;
    j["epochs"] = epochs;
    j["lr"] = lr;
    j["seed"] = seed;
    j["t_values"] = t_values;
    j["seeds"] = seeds;
    return j.dump();
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw FormatError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config: " + path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("config: " + path + ": expected a JSON object");
    const std::vector<std::string> known = {"data_dir", "out_dir",     "T",       "lambda",
                                            "patch",    "dim",         "heads",   "blocks",
                                            "decoder_dim", "classes",  "epochs",  "lr",
                                            "seed",     "t_values",    "seeds"};
    for (const auto& [key, val] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ContractError("config: unknown key \"" + key + "\"");
        }
    }
    try {
        if (j.contains("data_dir")) cfg.data_dir = j["data_dir"].get<std::string>();
        if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("T")) cfg.T = j["T"].get<int>();
        if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
        if (j.contains("patch")) cfg.patch = j["patch"].get<int>();
        if (j.contains("dim")) cfg.dim = j["dim"].get<int>();
        if (j.contains("heads")) cfg.heads = j["heads"].get<int>();
        if (j.contains("blocks")) cfg.blocks = j["blocks"].get<int>();
        if (j.contains("decoder_dim")) cfg.decoder_dim = j["decoder_dim"].get<int>();
        if (j.contains("classes")) cfg.classes = j["classes"].get<int>();
        if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
        if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("t_values")) cfg.t_values = j["t_values"].get<std::vector<int>>();
        if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config: bad value in " + path + ": " + e.what());
    }
    return cfg;
}

} // namespace sta
