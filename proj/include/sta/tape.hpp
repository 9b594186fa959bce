// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <functional>
#include <string>
#include <vector>

#include "sta/param_store.hpp"
#include "sta/tensor.hpp"

namespace sta {

// Reverse-mode tape over Tensor-valued operations. Each call records one node
// whose forward value is computed immediately by the kernels in linalg.hpp;
// backward() replays the records once, in reverse execution order, and then
// adds (never overwrites) parameter gradients into the bound ParamStore.
//
// Nodes are addressed by index. A tape is single-writer and not reusable
// across threads; independent evaluations use independent tapes.
class Tape {
public:
    using NodeId = int;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf whose gradient is discarded.
    NodeId constant(Tensor v);
    // Leaf bound to a named parameter; repeated calls with the same name
    // return the same node, so gradients from all uses accumulate there.
    NodeId param(ParamStore& store, const std::string& name);

    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_nt(NodeId a, NodeId b); // A * B^T
    NodeId add(NodeId a, NodeId b);
    NodeId add_const(NodeId a, Tensor c); // gradient flows into a only
    NodeId add_bias(NodeId x, NodeId bias);
    NodeId scale(NodeId a, double s);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId softmax_rows(NodeId a);
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps);
    NodeId gelu(NodeId a);
    NodeId reshape(NodeId a, std::vector<int> new_dims);
    NodeId extract_patches(NodeId img, int patch);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId bilinear_upsample(NodeId a, int out_h, int out_w);
    NodeId sum(NodeId a); // scalar [1]
    // Mean over non-ignored rows of -log softmax(logits)[label]; labels is a
    // flat tensor of class ids with 255 as the ignore sentinel.
    NodeId cross_entropy_logits(NodeId logits, const Tensor& labels);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad_of(NodeId id) const { return nodes_[id].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1, sweeps the tape backward once, then
    // accumulates gradients of trainable parameters into their stores.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, NodeId)> back; // null for leaves
    };
    struct ParamBinding {
        ParamStore* store;
        std::string name;
        NodeId node;
    };

    NodeId push(Tensor value, std::function<void(Tape&, NodeId)> back);
    Tensor& gbuf(NodeId id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
    std::vector<ParamBinding> bindings_;
    std::vector<std::pair<const void*, std::string>> binding_keys_;
};

} // namespace sta
