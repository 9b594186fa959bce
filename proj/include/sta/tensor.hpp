// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <cstddef>
#include <string>
#include <vector>

#include "sta/errors.hpp"

namespace sta {

// Dense row-major array of doubles. The single value carrier for frames,
// token features, parameters, flows and label maps.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d, double fill = 0.0);
    static Tensor from(std::vector<int> d, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    int ndim() const { return static_cast<int>(dims.size()); }

    // 2-D accessors [rows x cols]
    int rows() const { return dims.at(0); }
    int cols() const { return dims.at(1); }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * dims[1] + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * dims[1] + c]; }

    // 3-D accessors [d0 x d1 x d2]
    double& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k];
    }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }
    bool all_finite() const;
    std::string dims_str() const;
};

// Throws ShapeError naming both shapes unless a and b have identical dims.
void require_same_dims(const Tensor& a, const Tensor& b, const char* op);

std::size_t checked_volume(const std::vector<int>& dims);

} // namespace sta
