#include <algorithm>
#include <cmath>
#include <limits>

#include <cblas.h>

#include "ntp/numcore.hpp"

namespace ntp {
namespace {

Var make_node(Array value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

[[noreturn]] void shape_mismatch(const char* op, const Array& a, const Array& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
}

void require_rank(const char* op, const Array& a, std::size_t r) {
    if (a.rank() != r) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                             shape_str(a.shape()));
    }
}

using Trans = CBLAS_TRANSPOSE;

// C (m×n) = alpha · op(A) · op(B) + beta · C, row-major.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double beta, double* c) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (beta == 0.0) std::fill(c, c + m * n, 0.0);
        return;
    }
    const auto lda = static_cast<int>(ta == CblasNoTrans ? k : m);
    const auto ldb = static_cast<int>(tb == CblasNoTrans ? n : k);
    cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, lda,
                b, ldb, beta, c, static_cast<int>(n));
}

enum class Broadcast { none, left_scalar, right_scalar };

Broadcast check_elementwise(const char* op, const Array& a, const Array& b) {
    if (a.shape() == b.shape()) return Broadcast::none;
    if (a.size() == 1) return Broadcast::left_scalar;
    if (b.size() == 1) return Broadcast::right_scalar;
    shape_mismatch(op, a, b);
}

template <class F>
Array zip(const Array& a, const Array& b, Broadcast bc, F f) {
    const Array& big = bc == Broadcast::left_scalar ? b : a;
    Array out(big.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = bc == Broadcast::left_scalar ? a[0] : a[i];
        const double y = bc == Broadcast::right_scalar ? b[0] : b[i];
        out[i] = f(x, y);
    }
    return out;
}

// Adds g·w into parent grad; reduces to a scalar when the parent was broadcast.
void push_grad(Node& parent, const Array& g, bool broadcast, double w = 1.0) {
    if (!parent.requires_grad) return;
    auto& buf = parent.grad_buffer();
    if (broadcast) {
        double s = 0.0;
        for (double v : g.data()) s += v;
        buf[0] += w * s;
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) buf[i] += w * g[i];
    }
}

} // namespace

// ---------------------------------------------------------------- matmul

Var matmul(const Var& a, const Var& b) {
    const auto& A = a->value;
    const auto& B = b->value;
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) shape_mismatch("matmul", A, B);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Array out({m, n});
    gemm(CblasNoTrans, CblasNoTrans, m, n, k, A.data().data(), B.data().data(), 0.0, out.data().data());
    return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data().data();
        if (pa.requires_grad)
            gemm(CblasNoTrans, CblasTrans, m, k, n, g, pb.value.data().data(), 1.0, pa.grad_buffer().data().data());
        if (pb.requires_grad)
            gemm(CblasTrans, CblasNoTrans, k, n, m, pa.value.data().data(), g, 1.0, pb.grad_buffer().data().data());
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const auto& A = a->value;
    const auto& B = b->value;
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1)) shape_mismatch("matmul_nt", A, B);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(0);
    Array out({m, n});
    gemm(CblasNoTrans, CblasTrans, m, n, k, A.data().data(), B.data().data(), 0.0, out.data().data());
    return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data().data();
        if (pa.requires_grad)
            gemm(CblasNoTrans, CblasNoTrans, m, k, n, g, pb.value.data().data(), 1.0,
                 pa.grad_buffer().data().data());
        if (pb.requires_grad)
            gemm(CblasTrans, CblasNoTrans, n, k, m, g, pa.value.data().data(), 1.0, pb.grad_buffer().data().data());
    });
}

Var bmm(const Var& a, const Var& b) {
    const auto& A = a->value;
    const auto& B = b->value;
    if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(1)) shape_mismatch("bmm", A, B);
    const std::size_t bs = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(2);
    Array out({bs, m, n});
    for (std::size_t i = 0; i < bs; ++i)
        gemm(CblasNoTrans, CblasNoTrans, m, n, k, A.data().data() + i * m * k, B.data().data() + i * k * n, 0.0,
             out.data().data() + i * m * n);
    return make_node(std::move(out), {a, b}, [bs, m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data().data();
        for (std::size_t i = 0; i < bs; ++i) {
            if (pa.requires_grad)
                gemm(CblasNoTrans, CblasTrans, m, k, n, g + i * m * n, pb.value.data().data() + i * k * n, 1.0,
                     pa.grad_buffer().data().data() + i * m * k);
            if (pb.requires_grad)
                gemm(CblasTrans, CblasNoTrans, k, n, m, pa.value.data().data() + i * m * k, g + i * m * n, 1.0,
                     pb.grad_buffer().data().data() + i * k * n);
        }
    });
}

Var bmm_nt(const Var& a, const Var& b) {
    const auto& A = a->value;
    const auto& B = b->value;
    if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(2))
        shape_mismatch("bmm_nt", A, B);
    const std::size_t bs = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(1);
    Array out({bs, m, n});
    for (std::size_t i = 0; i < bs; ++i)
        gemm(CblasNoTrans, CblasTrans, m, n, k, A.data().data() + i * m * k, B.data().data() + i * n * k, 0.0,
             out.data().data() + i * m * n);
    return make_node(std::move(out), {a, b}, [bs, m, k, n](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data().data();
        for (std::size_t i = 0; i < bs; ++i) {
            if (pa.requires_grad)
                gemm(CblasNoTrans, CblasNoTrans, m, k, n, g + i * m * n, pb.value.data().data() + i * n * k, 1.0,
                     pa.grad_buffer().data().data() + i * m * k);
            if (pb.requires_grad)
                gemm(CblasTrans, CblasNoTrans, n, k, m, g + i * m * n, pa.value.data().data() + i * m * k, 1.0,
                     pb.grad_buffer().data().data() + i * n * k);
        }
    });
}

// ------------------------------------------------------------ elementwise

Var add(const Var& a, const Var& b) {
    const auto bc = check_elementwise("add", a->value, b->value);
    return make_node(zip(a->value, b->value, bc, [](double x, double y) { return x + y; }), {a, b},
                     [bc](Node& self) {
                         push_grad(*self.parents[0], self.grad, bc == Broadcast::left_scalar);
                         push_grad(*self.parents[1], self.grad, bc == Broadcast::right_scalar);
                     });
}

Var sub(const Var& a, const Var& b) {
    const auto bc = check_elementwise("sub", a->value, b->value);
    return make_node(zip(a->value, b->value, bc, [](double x, double y) { return x - y; }), {a, b},
                     [bc](Node& self) {
                         push_grad(*self.parents[0], self.grad, bc == Broadcast::left_scalar);
                         push_grad(*self.parents[1], self.grad, bc == Broadcast::right_scalar, -1.0);
                     });
}

Var mul(const Var& a, const Var& b) {
    const auto bc = check_elementwise("mul", a->value, b->value);
    return make_node(zip(a->value, b->value, bc, [](double x, double y) { return x * y; }), {a, b},
                     [bc](Node& self) {
                         auto& pa = *self.parents[0];
                         auto& pb = *self.parents[1];
                         if (pa.requires_grad) {
                             auto ga = zip(self.grad, pb.value,
                                           bc == Broadcast::left_scalar ? Broadcast::none : bc,
                                           [](double g, double y) { return g * y; });
                             push_grad(pa, ga, bc == Broadcast::left_scalar);
                         }
                         if (pb.requires_grad) {
                             auto gb = zip(self.grad, pa.value,
                                           bc == Broadcast::right_scalar ? Broadcast::none
                                           : bc == Broadcast::left_scalar ? Broadcast::right_scalar
                                                                          : bc,
                                           [](double g, double x) { return g * x; });
                             push_grad(pb, gb, bc == Broadcast::right_scalar);
                         }
                     });
}

namespace {

template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
    const auto& A = a->value;
    Array out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
    return make_node(std::move(out), {a}, [df](Node& self) {
        auto& p = *self.parents[0];
        auto& buf = p.grad_buffer();
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += self.grad[i] * df(p.value[i], self.value[i]);
    });
}

} // namespace

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sin(const Var& a) {
    return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
    return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var add_rowwise(const Var& x, const Var& bias) {
    const auto& X = x->value;
    const auto& b = bias->value;
    if (b.size() != X.cols() || b.rank() != 1) shape_mismatch("add_rowwise", X, b);
    const std::size_t r = X.rows(), c = X.cols();
    Array out = X;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b[j];
    return make_node(std::move(out), {x, bias}, [r, c](Node& self) {
        auto& px = *self.parents[0];
        auto& pb = *self.parents[1];
        if (px.requires_grad) px.accumulate(self.grad.data());
        if (pb.requires_grad) {
            auto& gb = pb.grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad[i * c + j];
        }
    });
}

Var add_periodic_rows(const Var& x, const Var& table, std::size_t period) {
    const auto& X = x->value;
    const auto& T = table->value;
    if (X.rank() != 2 || T.rank() != 2 || T.dim(1) != X.dim(1) || period == 0 || period > T.dim(0))
        shape_mismatch("add_periodic_rows", X, T);
    const std::size_t r = X.dim(0), c = X.dim(1);
    Array out = X;
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = T.data().data() + (i % period) * c;
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += row[j];
    }
    return make_node(std::move(out), {x, table}, [r, c, period](Node& self) {
        auto& px = *self.parents[0];
        auto& pt = *self.parents[1];
        if (px.requires_grad) px.accumulate(self.grad.data());
        if (pt.requires_grad) {
            auto& gt = pt.grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gt[(i % period) * c + j] += self.grad[i * c + j];
        }
    });
}

// ------------------------------------------------------------- reductions

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data()) s += v;
    return make_node(Array::scalar(s), {a}, [](Node& self) {
        auto& p = *self.parents[0];
        auto& buf = p.grad_buffer();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g;
    });
}

Var mean(const Var& a) {
    if (a->value.size() == 0) throw DimensionError("mean of empty array");
    return scale(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

Var masked_mse(const Var& pred, const Array& target, const Array& mask) {
    const auto& P = pred->value;
    if (P.shape() != target.shape()) shape_mismatch("masked_mse", P, target);
    if (P.shape() != mask.shape()) shape_mismatch("masked_mse(mask)", P, mask);
    std::size_t count = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const double d = P[i] - target[i];
        acc += d * d;
        ++count;
    }
    const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
    return make_node(Array::scalar(acc * inv), {pred}, [target, mask, inv](Node& self) {
        auto& p = *self.parents[0];
        auto& buf = p.grad_buffer();
        const double g = self.grad[0] * 2.0 * inv;
        for (std::size_t i = 0; i < buf.size(); ++i)
            if (mask[i] != 0.0) buf[i] += g * (p.value[i] - target[i]);
    });
}

// ---------------------------------------------------------- normalisation

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const auto& X = x->value;
    const std::size_t d = X.cols();
    if (d == 0) throw DimensionError("layer_norm: last dimension is 0");
    if (gain->value.size() != d || bias->value.size() != d) shape_mismatch("layer_norm", X, gain->value);
    if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
    const std::size_t r = X.rows();
    Array out(X.shape());
    std::vector<double> xhat(X.size());
    std::vector<double> inv_std(r);
    const auto& G = gain->value;
    const auto& B = bias->value;
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = X.data().data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * is;
            xhat[i * d + j] = h;
            out[i * d + j] = G[j] * h + B[j];
        }
    }
    return make_node(std::move(out), {x, gain, bias},
                     [r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                         auto& px = *self.parents[0];
                         auto& pg = *self.parents[1];
                         auto& pb = *self.parents[2];
                         const auto& g = self.grad;
                         if (pg.requires_grad || pb.requires_grad) {
                             auto& gg = pg.grad_buffer();
                             auto& gb = pb.grad_buffer();
                             for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < d; ++j) {
                                     gg[j] += g[i * d + j] * xhat[i * d + j];
                                     gb[j] += g[i * d + j];
                                 }
                         }
                         if (!px.requires_grad) return;
                         auto& gx = px.grad_buffer();
                         const auto& G = pg.value;
                         const double fd = static_cast<double>(d);
                         for (std::size_t i = 0; i < r; ++i) {
                             double s1 = 0.0, s2 = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dh = g[i * d + j] * G[j];
                                 s1 += dh;
                                 s2 += dh * xhat[i * d + j];
                             }
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dh = g[i * d + j] * G[j];
                                 gx[i * d + j] += inv_std[i] / fd * (fd * dh - s1 - xhat[i * d + j] * s2);
                             }
                         }
                     });
}

namespace {

// Softmax over each row of length c, restricted to the first `valid(i)` entries.
template <class Valid>
Var softmax_impl(const Var& x, Valid valid) {
    const auto& X = x->value;
    const std::size_t c = X.cols();
    const std::size_t r = X.rows();
    Array out(X.shape(), 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t v = valid(i);
        const double* row = X.data().data() + i * c;
        double* o = out.data().data() + i * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            o[j] = std::exp(row[j] - mx);
            s += o[j];
        }
        for (std::size_t j = 0; j < v; ++j) o[j] /= s;
    }
    return make_node(std::move(out), {x}, [r, c, valid](Node& self) {
        auto& p = *self.parents[0];
        auto& gx = p.grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
            const std::size_t v = valid(i);
            const double* y = self.value.data().data() + i * c;
            const double* g = self.grad.data().data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < v; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < v; ++j) gx[i * c + j] += y[j] * (g[j] - dot);
        }
    });
}

} // namespace

Var softmax_lastdim(const Var& x) {
    const std::size_t c = x->value.cols();
    return softmax_impl(x, [c](std::size_t) { return c; });
}

Var causal_softmax(const Var& x) {
    const auto& X = x->value;
    if (X.rank() < 2 || X.dim(X.rank() - 1) != X.dim(X.rank() - 2))
        throw DimensionError("causal_softmax: trailing dims must be square, got " + shape_str(X.shape()));
    const std::size_t s = X.cols();
    return softmax_impl(x, [s](std::size_t i) { return i % s + 1; });
}

// -------------------------------------------------------------- reindexing

Var split_heads(const Var& x, std::size_t batch, std::size_t seq, std::size_t heads) {
    const auto& X = x->value;
    require_rank("split_heads", X, 2);
    const std::size_t d = X.dim(1);
    if (X.dim(0) != batch * seq || heads == 0 || d % heads != 0)
        throw DimensionError("split_heads: shape " + shape_str(X.shape()) + " vs batch " + std::to_string(batch) +
                             ", seq " + std::to_string(seq) + ", heads " + std::to_string(heads));
    const std::size_t dh = d / heads;
    Array out({batch * heads, seq, dh});
    auto index = [=](std::size_t b, std::size_t h, std::size_t s, std::size_t k) {
        return std::pair{((b * heads + h) * seq + s) * dh + k, (b * seq + s) * d + h * dh + k};
    };
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < seq; ++s)
                for (std::size_t k = 0; k < dh; ++k) {
                    auto [o, i] = index(b, h, s, k);
                    out[o] = X[i];
                }
    return make_node(std::move(out), {x}, [=](Node& self) {
        auto& gx = self.parents[0]->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t s = 0; s < seq; ++s)
                    for (std::size_t k = 0; k < dh; ++k) {
                        auto [o, i] = index(b, h, s, k);
                        gx[i] += self.grad[o];
                    }
    });
}

Var merge_heads(const Var& x, std::size_t batch, std::size_t seq, std::size_t heads) {
    const auto& X = x->value;
    require_rank("merge_heads", X, 3);
    if (X.dim(0) != batch * heads || X.dim(1) != seq)
        throw DimensionError("merge_heads: shape " + shape_str(X.shape()) + " vs batch " + std::to_string(batch) +
                             ", seq " + std::to_string(seq) + ", heads " + std::to_string(heads));
    const std::size_t dh = X.dim(2);
    const std::size_t d = dh * heads;
    Array out({batch * seq, d});
    auto index = [=](std::size_t b, std::size_t h, std::size_t s, std::size_t k) {
        return std::pair{((b * heads + h) * seq + s) * dh + k, (b * seq + s) * d + h * dh + k};
    };
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t s = 0; s < seq; ++s)
                for (std::size_t k = 0; k < dh; ++k) {
                    auto [i, o] = index(b, h, s, k);
                    out[o] = X[i];
                }
    return make_node(std::move(out), {x}, [=](Node& self) {
        auto& gx = self.parents[0]->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t s = 0; s < seq; ++s)
                    for (std::size_t k = 0; k < dh; ++k) {
                        auto [i, o] = index(b, h, s, k);
                        gx[i] += self.grad[o];
                    }
    });
}

Var concat_cols(const Var& a, const Var& b) {
    const auto& A = a->value;
    const auto& B = b->value;
    if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0)) shape_mismatch("concat_cols", A, B);
    const std::size_t r = A.dim(0), ca = A.dim(1), cb = B.dim(1), c = ca + cb;
    Array out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(A.data().data() + i * ca, ca, out.data().data() + i * c);
        std::copy_n(B.data().data() + i * cb, cb, out.data().data() + i * c + ca);
    }
    return make_node(std::move(out), {a, b}, [r, ca, cb, c](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < r; ++i) {
            if (pa.requires_grad) {
                auto& g = pa.grad_buffer();
                for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += self.grad[i * c + j];
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t j = 0; j < cb; ++j) g[i * cb + j] += self.grad[i * c + ca + j];
            }
        }
    });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t len) {
    const auto& X = x->value;
    require_rank("slice_cols", X, 2);
    const std::size_t r = X.dim(0), c = X.dim(1);
    if (start + len > c)
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + len) +
                             ") exceed shape " + shape_str(X.shape()));
    Array out({r, len});
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(X.data().data() + i * c + start, len, out.data().data() + i * len);
    return make_node(std::move(out), {x}, [r, c, start, len](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < len; ++j) g[i * c + start + j] += self.grad[i * len + j];
    });
}

Var strided_rows(const Var& x, std::size_t start, std::size_t step) {
    const auto& X = x->value;
    require_rank("strided_rows", X, 2);
    if (step == 0 || start >= X.dim(0)) throw DimensionError("strided_rows: bad start/step for " + shape_str(X.shape()));
    const std::size_t c = X.dim(1);
    const std::size_t n = (X.dim(0) - start + step - 1) / step;
    Array out({n, c});
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(X.data().data() + (start + i * step) * c, c, out.data().data() + i * c);
    return make_node(std::move(out), {x}, [n, c, start, step](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) g[(start + i * step) * c + j] += self.grad[i * c + j];
    });
}

Var interleave_rows(const Var& a, const Var& b) {
    const auto& A = a->value;
    const auto& B = b->value;
    if (A.rank() != 2 || A.shape() != B.shape()) shape_mismatch("interleave_rows", A, B);
    const std::size_t r = A.dim(0), c = A.dim(1);
    Array out({2 * r, c});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(A.data().data() + i * c, c, out.data().data() + 2 * i * c);
        std::copy_n(B.data().data() + i * c, c, out.data().data() + (2 * i + 1) * c);
    }
    return make_node(std::move(out), {a, b}, [r, c](Node& self) {
        for (std::size_t side = 0; side < 2; ++side) {
            auto& p = *self.parents[side];
            if (!p.requires_grad) continue;
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[(2 * i + side) * c + j];
        }
    });
}

Var substitute_rows(const Var& base, const Var& replacement, const std::vector<bool>& flags) {
    const auto& X = base->value;
    const auto& R = replacement->value;
    require_rank("substitute_rows", X, 2);
    if (R.size() != X.dim(1)) shape_mismatch("substitute_rows", X, R);
    if (flags.size() != X.dim(0))
        throw DimensionError("substitute_rows: " + std::to_string(flags.size()) + " flags for " +
                             shape_str(X.shape()));
    const std::size_t r = X.dim(0), c = X.dim(1);
    Array out = X;
    for (std::size_t i = 0; i < r; ++i)
        if (flags[i]) std::copy_n(R.data().data(), c, out.data().data() + i * c);
    return make_node(std::move(out), {base, replacement}, [r, c, flags](Node& self) {
        auto& pb = *self.parents[0];
        auto& pr = *self.parents[1];
        for (std::size_t i = 0; i < r; ++i) {
            if (flags[i]) {
                if (!pr.requires_grad) continue;
                auto& g = pr.grad_buffer();
                for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
            } else if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j];
            }
        }
    });
}

} // namespace ntp
