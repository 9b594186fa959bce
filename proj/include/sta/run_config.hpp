// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sta {

// Flat run configuration shared by train, predict, eval, ablate, and flops.
// Values come from an optional JSON file, then command-line flags override
// field by field. Unknown keys in the file are rejected.
struct RunConfig {
    std::string data_dir = "data";
    std::string out_dir = "out";
    int T = 3;
    double lambda = 0.8;
    int patch = 4;
    int dim = 32;
    int heads = 4;
    int blocks = 2;
    int decoder_dim = 64;
    int classes = 4;
    int epochs = 1;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::vector<int> t_values = {1, 2, 3};
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    void validate() const;
    std::string to_json() const;
};

// Reads and validates a config file; empty path gives the defaults.
RunConfig load_run_config(const std::string& path);

} // namespace sta
