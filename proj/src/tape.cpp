// SPDX-License-Identifier: Apache-2.0
#include "sta/tape.hpp"

#include <algorithm>
#include <cmath>

#include "sta/linalg.hpp"

namespace sta {

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::constant(Tensor v) { return push(std::move(v), nullptr); }

Tape::NodeId Tape::param(ParamStore& store, const std::string& name) {
    for (std::size_t i = 0; i < binding_keys_.size(); ++i) {
        if (binding_keys_[i].first == &store && binding_keys_[i].second == name) {
            return bindings_[i].node;
        }
    }
    NodeId id = push(store.value(name), nullptr);
    bindings_.push_back({&store, name, id});
    binding_keys_.emplace_back(&store, name);
    return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    return push(sta::matmul(value(a), value(b)), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        axpy(t.gbuf(a), 1.0, sta::matmul_nt(g, t.value(b)));
        axpy(t.gbuf(b), 1.0, sta::matmul_tn(t.value(a), g));
    });
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    return push(sta::matmul_nt(value(a), value(b)), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        axpy(t.gbuf(a), 1.0, sta::matmul(g, t.value(b)));
        axpy(t.gbuf(b), 1.0, sta::matmul_tn(g, t.value(a)));
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    return push(sta::add(value(a), value(b)), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        axpy(t.gbuf(a), 1.0, g);
        axpy(t.gbuf(b), 1.0, g);
    });
}

Tape::NodeId Tape::add_const(NodeId a, Tensor c) {
    return push(sta::add(value(a), c), [a](Tape& t, NodeId self) {
        axpy(t.gbuf(a), 1.0, t.gbuf(self));
    });
}

Tape::NodeId Tape::add_bias(NodeId x, NodeId bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    if (xv.ndim() != 2 || static_cast<std::size_t>(xv.cols()) != bv.size()) {
        throw ShapeError("add_bias: " + xv.dims_str() + " vs " + bv.dims_str());
    }
    Tensor out = xv;
    for (int i = 0; i < out.rows(); ++i) {
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bv.data[j];
    }
    return push(std::move(out), [x, bias](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        axpy(t.gbuf(x), 1.0, g);
        Tensor& db = t.gbuf(bias);
        const int rows = g.rows(), cols = g.cols();
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) db.data[j] += g.at(i, j);
        }
    });
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    return push(sta::scale(value(a), s), [a, s](Tape& t, NodeId self) {
        axpy(t.gbuf(a), s, t.gbuf(self));
    });
}

Tape::NodeId Tape::hadamard(NodeId a, NodeId b) {
    return push(sta::hadamard(value(a), value(b)), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        axpy(t.gbuf(a), 1.0, sta::hadamard(g, t.value(b)));
        axpy(t.gbuf(b), 1.0, sta::hadamard(g, t.value(a)));
    });
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
    return push(sta::softmax_rows(value(a)), [a](Tape& t, NodeId self) {
        const Tensor& s = t.value(self);
        const Tensor& g = t.gbuf(self);
        Tensor& da = t.gbuf(a);
        const int rows = s.rows(), cols = s.cols();
        for (int i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += g.at(i, j) * s.at(i, j);
            for (int j = 0; j < cols; ++j) da.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    return push(sta::layer_norm(value(x), value(gamma), value(beta), eps),
                [x, gamma, beta, eps](Tape& t, NodeId self) {
        const Tensor& xin = t.value(x);
        const Tensor& gm = t.value(gamma);
        const Tensor& g = t.gbuf(self);
        Tensor& dx = t.gbuf(x);
        Tensor& dgamma = t.gbuf(gamma);
        Tensor& dbeta = t.gbuf(beta);
        const int rows = xin.rows(), cols = xin.cols();
        for (int i = 0; i < rows; ++i) {
            const double* row = &xin.data[static_cast<std::size_t>(i) * cols];
            double mean = 0.0;
            for (int j = 0; j < cols; ++j) mean += row[j];
            mean /= cols;
            double var = 0.0;
            for (int j = 0; j < cols; ++j) {
                const double d = row[j] - mean;
                var += d * d;
            }
            var /= cols;
            const double rstd = 1.0 / std::sqrt(var + eps);
            // xhat = (x - mean) * rstd; dx derived per row from the two means.
            double m1 = 0.0, m2 = 0.0;
            for (int j = 0; j < cols; ++j) {
                const double xhat = (row[j] - mean) * rstd;
                const double gg = g.at(i, j) * gm.data[j];
                m1 += gg;
                m2 += gg * xhat;
                dgamma.data[j] += g.at(i, j) * xhat;
                dbeta.data[j] += g.at(i, j);
            }
            m1 /= cols;
            m2 /= cols;
            for (int j = 0; j < cols; ++j) {
                const double xhat = (row[j] - mean) * rstd;
                const double gg = g.at(i, j) * gm.data[j];
                dx.at(i, j) += (gg - m1 - xhat * m2) * rstd;
            }
        }
    });
}

Tape::NodeId Tape::gelu(NodeId a) {
    return push(sta::gelu(value(a)), [a](Tape& t, NodeId self) {
        const Tensor& xin = t.value(a);
        const Tensor& g = t.gbuf(self);
        Tensor& da = t.gbuf(a);
        for (std::size_t i = 0; i < xin.size(); ++i) {
            da.data[i] += g.data[i] * gelu_grad_scalar(xin.data[i]);
        }
    });
}

Tape::NodeId Tape::reshape(NodeId a, std::vector<int> new_dims) {
    const Tensor& v = value(a);
    if (checked_volume(new_dims) != v.size()) {
        throw ShapeError("reshape: volume mismatch " + v.dims_str());
    }
    Tensor out;
    out.dims = std::move(new_dims);
    out.data = v.data;
    return push(std::move(out), [a](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        Tensor& da = t.gbuf(a);
        for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
    });
}

Tape::NodeId Tape::extract_patches(NodeId img, int patch) {
    return push(sta::image_to_patches(value(img), patch), [img, patch](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        Tensor& di = t.gbuf(img);
        const int h = di.dims[0], w = di.dims[1], ch = di.dims[2];
        const int gw = w / patch;
        const int flat = ch * patch * patch;
        for (int l = 0; l < g.rows(); ++l) {
            const int gr = l / gw, gc = l % gw;
            const double* row = &g.data[static_cast<std::size_t>(l) * flat];
            std::size_t idx = 0;
            for (int pr = 0; pr < patch; ++pr) {
                for (int pc = 0; pc < patch; ++pc) {
                    for (int k = 0; k < ch; ++k) {
                        di.at(gr * patch + pr, gc * patch + pc, k) += row[idx++];
                    }
                }
            }
        }
        (void)h;
    });
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const int rows = value(parts[0]).rows();
    int total = 0;
    for (NodeId p : parts) {
        if (value(p).ndim() != 2 || value(p).rows() != rows) {
            throw ShapeError("concat_cols: incompatible part shape " + value(p).dims_str());
        }
        total += value(p).cols();
    }
    Tensor out({rows, total});
    int off = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < v.cols(); ++j) out.at(i, off + j) = v.at(i, j);
        }
        off += v.cols();
    }
    std::vector<NodeId> ps = parts;
    return push(std::move(out), [ps](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        int off = 0;
        for (NodeId p : ps) {
            Tensor& dp = t.gbuf(p);
            for (int i = 0; i < dp.rows(); ++i) {
                for (int j = 0; j < dp.cols(); ++j) dp.at(i, j) += g.at(i, off + j);
            }
            off += dp.cols();
        }
    });
}

Tape::NodeId Tape::bilinear_upsample(NodeId a, int out_h, int out_w) {
    return push(sta::bilinear_upsample(value(a), out_h, out_w),
                [a, out_h, out_w](Tape& t, NodeId self) {
        const Tensor& g = t.gbuf(self);
        Tensor& da = t.gbuf(a);
        const int h = da.dims[0], w = da.dims[1], ch = da.dims[2];
        const double sy = (out_h > 1 && h > 1) ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
        const double sx = (out_w > 1 && w > 1) ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
        for (int r = 0; r < out_h; ++r) {
            const double fy = r * sy;
            int y0 = static_cast<int>(fy);
            if (y0 > h - 2) y0 = h > 1 ? h - 2 : 0;
            const double wy = h > 1 ? fy - y0 : 0.0;
            const int y1 = h > 1 ? y0 + 1 : y0;
            for (int c = 0; c < out_w; ++c) {
                const double fx = c * sx;
                int x0 = static_cast<int>(fx);
                if (x0 > w - 2) x0 = w > 1 ? w - 2 : 0;
                const double wx = w > 1 ? fx - x0 : 0.0;
                const int x1 = w > 1 ? x0 + 1 : x0;
                for (int k = 0; k < ch; ++k) {
                    const double gv = g.at(r, c, k);
                    da.at(y0, x0, k) += gv * (1.0 - wx) * (1.0 - wy);
                    da.at(y0, x1, k) += gv * wx * (1.0 - wy);
                    da.at(y1, x0, k) += gv * (1.0 - wx) * wy;
                    da.at(y1, x1, k) += gv * wx * wy;
                }
            }
        }
    });
}

Tape::NodeId Tape::sum(NodeId a) {
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    return push(Tensor::from({1}, {acc}), [a](Tape& t, NodeId self) {
        const double g = t.gbuf(self).data[0];
        Tensor& da = t.gbuf(a);
        for (double& v : da.data) v += g;
    });
}

Tape::NodeId Tape::cross_entropy_logits(NodeId logits, const Tensor& labels) {
    const Tensor& lg = value(logits);
    if (lg.ndim() != 2) {
        throw ShapeError("cross_entropy_logits: expected [N x C] logits, got " + lg.dims_str());
    }
    const int n = lg.rows(), c = lg.cols();
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw ShapeError("cross_entropy_logits: labels length " + std::to_string(labels.size()) +
                         " vs " + std::to_string(n) + " rows");
    }
    double loss = 0.0;
    int kept = 0;
    for (int i = 0; i < n; ++i) {
        const double lab = labels.data[i];
        if (lab == 255.0) continue;
        const int li = static_cast<int>(lab);
        if (lab != std::floor(lab) || li < 0 || li >= c) {
            throw ContractError("cross_entropy_logits: label " + std::to_string(lab) +
                                " outside {0.." + std::to_string(c - 1) + "} u {255}");
        }
        const double* row = &lg.data[static_cast<std::size_t>(i) * c];
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double se = 0.0;
        for (int j = 0; j < c; ++j) se += std::exp(row[j] - mx);
        loss += (mx + std::log(se)) - row[li];
        ++kept;
    }
    if (kept == 0) throw UndefinedMetricError("cross_entropy_logits: all pixels ignored");
    loss /= kept;
    Tensor labs = labels;
    return push(Tensor::from({1}, {loss}), [logits, labs, kept](Tape& t, NodeId self) {
        const double g = t.gbuf(self).data[0] / kept;
        const Tensor& lg = t.value(logits);
        Tensor& dl = t.gbuf(logits);
        const int n = lg.rows(), c = lg.cols();
        for (int i = 0; i < n; ++i) {
            const double lab = labs.data[i];
            if (lab == 255.0) continue;
            const int li = static_cast<int>(lab);
            const double* row = &lg.data[static_cast<std::size_t>(i) * c];
            double mx = row[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double se = 0.0;
            for (int j = 0; j < c; ++j) se += std::exp(row[j] - mx);
            for (int j = 0; j < c; ++j) {
                const double p = std::exp(row[j] - mx) / se;
                dl.at(i, j) += g * (p - (j == li ? 1.0 : 0.0));
            }
        }
    });
}

void Tape::backward(NodeId loss) {
    if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size())) {
        throw ContractError("backward: invalid loss node");
    }
    if (nodes_[loss].value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + nodes_[loss].value.dims_str());
    }
    for (auto& n : nodes_) n.grad = Tensor(n.value.dims, 0.0);
    nodes_[loss].grad.data[0] = 1.0;
    for (NodeId i = static_cast<NodeId>(nodes_.size()) - 1; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this, i);
    }
    for (const auto& b : bindings_) {
        if (!b.store->trainable(b.name)) continue;
        Tensor& acc = b.store->grad(b.name);
        const Tensor& g = nodes_[b.node].grad;
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
    }
}

} // namespace sta
