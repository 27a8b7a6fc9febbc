#ifndef PFTADB_OPS_HPP
#define PFTADB_OPS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pftadb/autodiff.hpp"
#include "pftadb/error.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

// ---------------------------------------------------------------------------
// Plain tensor kernels. Accumulation runs left to right in row-major order so
// results are bit-reproducible.
// ---------------------------------------------------------------------------

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()));
    }
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            const double* bp = b.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

/// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw DimensionError("matmul_nt: inner extents differ " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()) + "^T");
    }
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            const auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            c(i, j) = s;
        }
    }
    return c;
}

/// a^T * b.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul_tn: inner extents differ " + shape_string(a.shape()) + "^T * " +
                             shape_string(b.shape()));
    }
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t p = 0; p < k; ++p) {
        const auto ap = a.row(p);
        const auto bp = b.row(p);
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c.data().data() + i * n;
            const double aip = ap[i];
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    Tensor t = Tensor::matrix(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Tensor softmax_rows(const Tensor& x) {
    if (x.cols() == 0) throw DimensionError("softmax_rows: empty row dimension");
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        auto out = y.row(r);
        const double peak = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            out[j] = std::exp(in[j] - peak);
            total += out[j];
        }
        for (double& v : out) v /= total;
    }
    return y;
}

/// Row-wise standardization (population variance) followed by gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t d = x.cols();
    if (d == 0) throw DimensionError("layer_norm: empty feature dimension");
    if (gain.size() != d || bias.size() != d) throw DimensionError("layer_norm: gain/bias width mismatch");
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        auto out = y.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) out[j] = (in[j] - mean) * inv * gain[j] + bias[j];
    }
    return y;
}

namespace detail {

template <typename F>
Tensor map(const Tensor& x, F f) {
    Tensor y(x.shape());
    auto in = x.data();
    auto out = y.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    return y;
}

inline void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * s[i];
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable ops on graph values.
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    Graph& g = *a.graph();
    return g.record(matmul(a.value(), b.value()), {a, b}, [a, b](Graph& g, const Tensor& dy) {
        if (Tensor* ga = g.grad_target(a)) detail::axpy(*ga, matmul_nt(dy, g.value(b)).reshaped(ga->shape()));
        if (Tensor* gb = g.grad_target(b)) detail::axpy(*gb, matmul_tn(g.value(a), dy).reshaped(gb->shape()));
    }, "matmul");
}

inline Var transpose(Var a) {
    Graph& g = *a.graph();
    return g.record(transpose(a.value()), {a}, [a](Graph& g, const Tensor& dy) {
        if (Tensor* ga = g.grad_target(a)) detail::axpy(*ga, transpose(dy).reshaped(ga->shape()));
    }, "transpose");
}

inline Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Graph& g = *a.graph();
    Tensor y = a.value();
    detail::axpy(y, b.value());
    return g.record(std::move(y), {a, b}, [a, b](Graph& g, const Tensor& dy) {
        if (Tensor* ga = g.grad_target(a)) detail::axpy(*ga, dy);
        if (Tensor* gb = g.grad_target(b)) detail::axpy(*gb, dy);
    }, "add");
}

inline Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Graph& g = *a.graph();
    Tensor y = a.value();
    detail::axpy(y, b.value(), -1.0);
    return g.record(std::move(y), {a, b}, [a, b](Graph& g, const Tensor& dy) {
        if (Tensor* ga = g.grad_target(a)) detail::axpy(*ga, dy);
        if (Tensor* gb = g.grad_target(b)) detail::axpy(*gb, dy, -1.0);
    }, "sub");
}

inline Var scale(Var a, double s) {
    Graph& g = *a.graph();
    return g.record(detail::map(a.value(), [s](double v) { return v * s; }), {a}, [a, s](Graph& g, const Tensor& dy) {
        if (Tensor* ga = g.grad_target(a)) detail::axpy(*ga, dy, s);
    }, "scale");
}

/// x (m x n) plus a row vector b (n) broadcast over rows.
inline Var add_row(Var x, Var b) {
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    if (bv.size() != xv.cols()) {
        throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " vs input " + shape_string(xv.shape()));
    }
    Tensor y = xv;
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += bv[j];
    }
    Graph& g = *x.graph();
    return g.record(std::move(y), {x, b}, [x, b](Graph& g, const Tensor& dy) {
        if (Tensor* gx = g.grad_target(x)) detail::axpy(*gx, dy);
        if (Tensor* gb = g.grad_target(b)) {
            for (std::size_t r = 0; r < dy.rows(); ++r) {
                const auto row = dy.row(r);
                for (std::size_t j = 0; j < row.size(); ++j) (*gb)[j] += row[j];
            }
        }
    }, "add_row");
}

inline Var softmax_rows(Var x) {
    Graph& g = *x.graph();
    Tensor y = softmax_rows(x.value());
    Tensor y_saved = y;
    return g.record(std::move(y), {x}, [x, y_saved](Graph& g, const Tensor& dy) {
        Tensor* gx = g.grad_target(x);
        if (!gx) return;
        for (std::size_t r = 0; r < dy.rows(); ++r) {
            const auto yr = y_saved.row(r);
            const auto dyr = dy.row(r);
            double dot = 0.0;
            for (std::size_t j = 0; j < yr.size(); ++j) dot += dyr[j] * yr[j];
            auto gr = gx->row(r);
            for (std::size_t j = 0; j < yr.size(); ++j) gr[j] += yr[j] * (dyr[j] - dot);
        }
    }, "softmax_rows");
}

inline Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Graph& g = *x.graph();
    Tensor y = layer_norm(x.value(), gain.value(), bias.value(), eps);
    return g.record(std::move(y), {x, gain, bias}, [x, gain, bias, eps](Graph& g, const Tensor& dy) {
        const Tensor& xv = g.value(x);
        const Tensor& gv = g.value(gain);
        const std::size_t d = xv.cols();
        const double inv_d = 1.0 / static_cast<double>(d);
        Tensor* gx = g.grad_target(x);
        Tensor* gg = g.grad_target(gain);
        Tensor* gb = g.grad_target(bias);
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            const auto in = xv.row(r);
            const auto dyr = dy.row(r);
            double mean = 0.0;
            for (double v : in) mean += v;
            mean *= inv_d;
            double var = 0.0;
            for (double v : in) var += (v - mean) * (v - mean);
            var *= inv_d;
            const double inv = 1.0 / std::sqrt(var + eps);
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[j] = (in[j] - mean) * inv;
                dxhat[j] = dyr[j] * gv[j];
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += dxhat[j] * xhat[j];
                if (gg) (*gg)[j] += dyr[j] * xhat[j];
                if (gb) (*gb)[j] += dyr[j];
            }
            if (!gx) continue;
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            auto gr = gx->row(r);
            for (std::size_t j = 0; j < d; ++j) gr[j] += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }, "layer_norm");
}

namespace detail {

template <typename F, typename DF>
Var unary(Var x, F f, DF df, const char* name) {
    Graph& g = *x.graph();
    return g.record(map(x.value(), f), {x}, [x, df](Graph& g, const Tensor& dy) {
        Tensor* gx = g.grad_target(x);
        if (!gx) return;
        auto in = g.value(x).data();
        auto d = dy.data();
        auto out = gx->data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i] * df(in[i]);
    }, name);
}

}  // namespace detail

inline Var gelu(Var x) { return detail::unary(x, detail::gelu, detail::gelu_grad, "gelu"); }

inline Var relu(Var x) {
    return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; },
                         "relu");
}

inline Var tanh(Var x) {
    return detail::unary(x, [](double v) { return std::tanh(v); },
                         [](double v) {
                             const double t = std::tanh(v);
                             return 1.0 - t * t;
                         },
                         "tanh");
}

inline Var softplus(Var x) { return detail::unary(x, detail::softplus, detail::sigmoid, "softplus"); }

inline Var abs(Var x) {
    return detail::unary(x, [](double v) { return std::abs(v); },
                         [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

/// Stacks inputs vertically. Rank-1 inputs count as single rows.
inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts.front().value().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.value().cols() != cols) throw DimensionError("concat_rows: column count mismatch");
        rows += p.value().rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    Graph& g = *parts.front().graph();
    return g.record_range(Tensor({rows, cols}, std::move(data)), parts, [parts](Graph& g, const Tensor& dy) {
        std::size_t offset = 0;
        for (const Var& p : parts) {
            const std::size_t n = g.value(p).size();
            if (Tensor* gp = g.grad_target(p)) {
                auto dst = gp->data();
                for (std::size_t i = 0; i < n; ++i) dst[i] += dy[offset + i];
            }
            offset += n;
        }
    }, "concat_rows");
}

inline Var concat_rows(Var a, Var b) { return concat_rows(std::vector<Var>{a, b}); }

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts.front().value().rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.value().rows() != rows) throw DimensionError("concat_cols: row count mismatch");
        cols += p.value().cols();
    }
    Tensor y = Tensor::matrix(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < v.cols(); ++j) y(r, offset + j) = v(r, j);
        offset += v.cols();
    }
    Graph& g = *parts.front().graph();
    return g.record_range(std::move(y), parts, [parts](Graph& g, const Tensor& dy) {
        std::size_t offset = 0;
        for (const Var& p : parts) {
            const std::size_t width = g.value(p).cols();
            if (Tensor* gp = g.grad_target(p)) {
                for (std::size_t r = 0; r < dy.rows(); ++r)
                    for (std::size_t j = 0; j < width; ++j) (*gp)(r, j) += dy(r, offset + j);
            }
            offset += width;
        }
    }, "concat_cols");
}

/// Columns [start, start + count) of a matrix.
inline Var slice_cols(Var x, std::size_t start, std::size_t count) {
    const Tensor& xv = x.value();
    if (start + count > xv.cols()) throw DimensionError("slice_cols: range out of bounds");
    Tensor y = Tensor::matrix(xv.rows(), count);
    for (std::size_t r = 0; r < xv.rows(); ++r)
        for (std::size_t j = 0; j < count; ++j) y(r, j) = xv(r, start + j);
    Graph& g = *x.graph();
    return g.record(std::move(y), {x}, [x, start, count](Graph& g, const Tensor& dy) {
        Tensor* gx = g.grad_target(x);
        if (!gx) return;
        for (std::size_t r = 0; r < dy.rows(); ++r)
            for (std::size_t j = 0; j < count; ++j) (*gx)(r, start + j) += dy(r, j);
    }, "slice_cols");
}

/// Row lookup: output row i is table row ids[i].
inline Var gather_rows(Var table, std::vector<std::size_t> ids) {
    const Tensor& tv = table.value();
    const std::size_t cols = tv.cols();
    Tensor y = Tensor::matrix(ids.size(), cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tv.rows()) throw DimensionError("gather_rows: row index out of range");
        std::copy_n(tv.row(ids[i]).begin(), cols, y.row(i).begin());
    }
    Graph& g = *table.graph();
    return g.record(std::move(y), {table}, [table, ids = std::move(ids)](Graph& g, const Tensor& dy) {
        Tensor* gt = g.grad_target(table);
        if (!gt) return;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            auto dst = gt->row(ids[i]);
            const auto src = dy.row(i);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }, "gather_rows");
}

/// Mean over the rows whose mask entry is set. Output is a rank-1 tensor of width cols.
inline Var masked_mean_rows(Var x, std::span<const std::uint8_t> mask) {
    const Tensor& xv = x.value();
    if (mask.size() != xv.rows()) throw DimensionError("masked_mean_rows: mask length differs from row count");
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < mask.size(); ++r)
        if (mask[r]) kept.push_back(r);
    if (kept.empty()) throw PoolingError("mean pooling over a fully masked sequence");
    Tensor y({xv.cols()});
    for (std::size_t r : kept) {
        const auto row = xv.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) y[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(kept.size());
    for (double& v : y.data()) v *= inv;
    Graph& g = *x.graph();
    return g.record(std::move(y), {x}, [x, kept = std::move(kept), inv](Graph& g, const Tensor& dy) {
        Tensor* gx = g.grad_target(x);
        if (!gx) return;
        for (std::size_t r : kept) {
            auto dst = gx->row(r);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += dy[j] * inv;
        }
    }, "masked_mean_rows");
}

/// Mean of all entries, as a shape-[1] scalar.
inline Var mean_all(Var x) {
    const Tensor& xv = x.value();
    if (xv.size() == 0) throw DimensionError("mean_all: empty input");
    double s = 0.0;
    for (double v : xv.data()) s += v;
    const double inv = 1.0 / static_cast<double>(xv.size());
    Graph& g = *x.graph();
    return g.record(Tensor({1}, std::vector<double>{s * inv}), {x}, [x, inv](Graph& g, const Tensor& dy) {
        Tensor* gx = g.grad_target(x);
        if (!gx) return;
        for (double& v : gx->data()) v += dy[0] * inv;
    }, "mean_all");
}

/// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
inline Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& z = logits.value();
    const std::size_t n = z.rows(), k = z.cols();
    if (n == 0 || k == 0) throw DimensionError("softmax_cross_entropy: empty logits");
    if (labels.size() != n) throw DimensionError("softmax_cross_entropy: label count differs from batch size");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
        }
    }
    Tensor probs = softmax_rows(z);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = z.row(i);
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - peak);
        total += -(row[static_cast<std::size_t>(labels[i])] - peak - std::log(sum));
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<int> ys(labels.begin(), labels.end());
    Graph& g = *logits.graph();
    return g.record(Tensor({1}, std::vector<double>{total * inv_n}), {logits},
                    [logits, probs = std::move(probs), ys = std::move(ys), inv_n](Graph& g, const Tensor& dy) {
                        Tensor* gz = g.grad_target(logits);
                        if (!gz) return;
                        const double s = dy[0] * inv_n;
                        for (std::size_t i = 0; i < probs.rows(); ++i) {
                            auto dst = gz->row(i);
                            const auto p = probs.row(i);
                            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * p[j];
                            dst[static_cast<std::size_t>(ys[i])] -= s;
                        }
                    },
                    "softmax_cross_entropy");
}

}  // namespace pftadb

#endif  // PFTADB_OPS_HPP
