// SPDX-License-Identifier: Apache-2.0
#include "sta/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sta {

std::size_t checked_volume(const std::vector<int>& dims) {
    if (dims.empty()) throw ShapeError("tensor must have at least one dimension");
    std::size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> d, double fill) : dims(std::move(d)) {
    data.assign(checked_volume(dims), fill);
}

Tensor Tensor::from(std::vector<int> d, std::vector<double> values) {
    const std::size_t n = checked_volume(d);
    if (values.size() != n) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match dims volume " + std::to_string(n));
    }
    Tensor t;
    t.dims = std::move(d);
    t.data = std::move(values);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::dims_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << " x ";
        os << dims[i];
    }
    os << "]";
    return os.str();
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_dims(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.dims_str() + " vs " + b.dims_str());
    }
}

} // namespace sta
