// SPDX-License-Identifier: Apache-2.0
#include "sta/linalg.hpp"

#include <cmath>

namespace sta {
namespace {

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + t.dims_str());
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ: " + a.dims_str() + " vs " + b.dims_str());
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n}, 0.0);
    // i-k-j order: the j loop vectorizes and the accumulation order per output
    // element is still ascending in k, matching a plain dot-product loop.
    for (int i = 0; i < m; ++i) {
        double* crow = &c.data[static_cast<std::size_t>(i) * n];
        const double* arow = &a.data[static_cast<std::size_t>(i) * k];
        for (int r = 0; r < k; ++r) {
            const double av = arow[r];
            const double* brow = &b.data[static_cast<std::size_t>(r) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: inner dimensions differ: " + a.dims_str() + " vs " +
                         b.dims_str() + "^T");
    }
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n}, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = &a.data[static_cast<std::size_t>(i) * k];
        double* crow = &c.data[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            const double* brow = &b.data[static_cast<std::size_t>(j) * k];
            double acc = 0.0;
            for (int r = 0; r < k; ++r) acc += arow[r] * brow[r];
            crow[j] = acc;
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_tn");
    require_2d(b, "matmul_tn");
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: inner dimensions differ: " + a.dims_str() + "^T vs " +
                         b.dims_str());
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({k, n}, 0.0);
    for (int r = 0; r < m; ++r) {
        const double* arow = &a.data[static_cast<std::size_t>(r) * k];
        const double* brow = &b.data[static_cast<std::size_t>(r) * n];
        for (int i = 0; i < k; ++i) {
            double* crow = &c.data[static_cast<std::size_t>(i) * n];
            const double av = arow[i];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "hadamard");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& v : c.data) v *= s;
    return c;
}

void axpy(Tensor& y, double s, const Tensor& x) {
    require_same_dims(y, x, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s * x.data[i];
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
    Tensor out = matmul(x, w);
    if (bias) {
        if (bias->ndim() != 1 || bias->dims[0] != out.cols()) {
            throw ShapeError("linear: bias shape " + bias->dims_str() + " does not match output " +
                             out.dims_str());
        }
        for (int i = 0; i < out.rows(); ++i) {
            for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bias->data[j];
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& m) {
    require_2d(m, "softmax_rows");
    Tensor out = m;
    const int rows = m.rows(), cols = m.cols();
    for (int i = 0; i < rows; ++i) {
        double* row = &out.data[static_cast<std::size_t>(i) * cols];
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < cols; ++j) row[j] /= sum;
    }
    return out;
}

Tensor layer_norm(const Tensor& m, const Tensor& gamma, const Tensor& beta, double eps) {
    require_2d(m, "layer_norm");
    if (eps <= 0) throw ContractError("layer_norm: eps must be positive");
    const int rows = m.rows(), cols = m.cols();
    if (gamma.ndim() != 1 || gamma.dims[0] != cols || beta.ndim() != 1 || beta.dims[0] != cols) {
        throw ShapeError("layer_norm: gamma " + gamma.dims_str() + " / beta " + beta.dims_str() +
                         " do not match row width " + std::to_string(cols));
    }
    Tensor out({rows, cols});
    for (int i = 0; i < rows; ++i) {
        const double* row = &m.data[static_cast<std::size_t>(i) * cols];
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
        double* orow = &out.data[static_cast<std::size_t>(i) * cols];
        for (int j = 0; j < cols; ++j) {
            orow[j] = (row[j] - mean) * rstd * gamma.data[j] + beta.data[j];
        }
    }
    return out;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779; // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = gelu_scalar(v);
    return out;
}

Tensor image_to_patches(const Tensor& img, int patch) {
    if (img.ndim() != 3) throw ShapeError("image_to_patches: expected [H x W x C], got " + img.dims_str());
    const int h = img.dims[0], w = img.dims[1], ch = img.dims[2];
    if (patch <= 0 || h % patch != 0 || w % patch != 0) {
        throw ShapeError("image_to_patches: patch size " + std::to_string(patch) +
                         " does not divide image " + img.dims_str());
    }
    const int gh = h / patch, gw = w / patch;
    const int flat = ch * patch * patch;
    Tensor out({gh * gw, flat});
    for (int gr = 0; gr < gh; ++gr) {
        for (int gc = 0; gc < gw; ++gc) {
            double* row = &out.data[static_cast<std::size_t>(gr * gw + gc) * flat];
            std::size_t idx = 0;
            for (int pr = 0; pr < patch; ++pr) {
                for (int pc = 0; pc < patch; ++pc) {
                    for (int k = 0; k < ch; ++k) {
                        row[idx++] = img.at(gr * patch + pr, gc * patch + pc, k);
                    }
                }
            }
        }
    }
    return out;
}

Tensor bilinear_upsample(const Tensor& src, int out_h, int out_w) {
    if (src.ndim() != 3) throw ShapeError("bilinear_upsample: expected [h x w x C], got " + src.dims_str());
    const int h = src.dims[0], w = src.dims[1], ch = src.dims[2];
    if (out_h < h || out_w < w) {
        throw ShapeError("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " smaller than source " + src.dims_str());
    }
    Tensor out({out_h, out_w, ch});
    // Corner-aligned sampling: source coordinate r*(h-1)/(H-1); a single
    // source row/column maps to coordinate 0 everywhere.
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
                const double top = src.at(y0, x0, k) * (1.0 - wx) + src.at(y0, x1, k) * wx;
                const double bot = src.at(y1, x0, k) * (1.0 - wx) + src.at(y1, x1, k) * wx;
                out.at(r, c, k) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Tensor softmax_channels(const Tensor& logits) {
    if (logits.ndim() != 3) {
        throw ShapeError("softmax_channels: expected [H x W x C], got " + logits.dims_str());
    }
    const int h = logits.dims[0], w = logits.dims[1], ch = logits.dims[2];
    Tensor out = logits;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double* px = &out.data[(static_cast<std::size_t>(r) * w + c) * ch];
            double mx = px[0];
            for (int k = 1; k < ch; ++k) mx = std::max(mx, px[k]);
            double sum = 0.0;
            for (int k = 0; k < ch; ++k) {
                px[k] = std::exp(px[k] - mx);
                sum += px[k];
            }
            for (int k = 0; k < ch; ++k) px[k] /= sum;
        }
    }
    return out;
}

Tensor argmax_channels(const Tensor& probs) {
    if (probs.ndim() != 3) {
        throw ShapeError("argmax_channels: expected [H x W x C], got " + probs.dims_str());
    }
    const int h = probs.dims[0], w = probs.dims[1], ch = probs.dims[2];
    Tensor out({h, w});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double* px = &probs.data[(static_cast<std::size_t>(r) * w + c) * ch];
            int best = 0;
            for (int k = 1; k < ch; ++k) {
                if (px[k] > px[best]) best = k; // strict: ties keep the smaller id
            }
            out.at(r, c) = best;
        }
    }
    return out;
}

} // namespace sta
