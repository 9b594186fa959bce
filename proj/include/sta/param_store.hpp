// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <map>
#include <string>

#include "sta/tensor.hpp"

namespace sta {

// Named learnable tensors with matching gradient accumulators. Iteration is
// in name order (std::map), which keeps optimizer updates deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        bool trainable = true;
    };

    void add(const std::string& name, Tensor value, bool trainable = true) {
        if (entries_.count(name)) throw ContractError("duplicate parameter name: " + name);
        Entry e;
        e.grad = Tensor(value.dims, 0.0);
        e.value = std::move(value);
        e.trainable = trainable;
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor& value(const std::string& name) { return at(name).value; }
    const Tensor& value(const std::string& name) const { return at(name).value; }
    Tensor& grad(const std::string& name) { return at(name).grad; }
    const Tensor& grad(const std::string& name) const { return at(name).grad; }
    bool trainable(const std::string& name) const { return at(name).trainable; }

    void zero_grads() {
        for (auto& [name, e] : entries_) {
            std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
        }
    }

    std::size_t size() const { return entries_.size(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }

    std::map<std::string, Entry> entries_;
};

} // namespace sta
