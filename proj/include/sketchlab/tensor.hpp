#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

// Dense row-major tensors with reverse-mode autodiff. Templated on the scalar
// type: float for training, double for finite-difference gradient checks.
// Each op builds a node whose backward closure accumulates into its parents'
// grad buffers; TensorT::backward() runs the closures in reverse topological
// order. Graphs are DAGs (closures hold parents, never themselves), so a
// step's graph is freed when the loss handle goes out of scope.

namespace sketchlab {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

inline thread_local int nograd_depth = 0;

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapC = Eigen::Map<const MatRM<T>>;

// C (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int m, int k, int n, bool acc) {
    MapC<T> a(A, m, k);
    MapC<T> b(B, k, n);
    MapM<T> c(C, m, n);
    if (acc)
        c.noalias() += a * b;
    else
        c.noalias() = a * b;
}

// C (+)= A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int m, int k, int n, bool acc) {
    MapC<T> a(A, m, k);
    MapC<T> b(B, n, k);
    MapM<T> c(C, m, n);
    if (acc)
        c.noalias() += a * b.transpose();
    else
        c.noalias() = a * b.transpose();
}

// C (+)= A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int m, int k, int n, bool acc) {
    MapC<T> a(A, k, m);
    MapC<T> b(B, k, n);
    MapM<T> c(C, m, n);
    if (acc)
        c.noalias() += a.transpose() * b;
    else
        c.noalias() = a.transpose() * b;
}

} // namespace detail

// Scoped guard: while alive, ops record no backward graph.
struct NoGrad {
    NoGrad() { ++detail::nograd_depth; }
    ~NoGrad() { --detail::nograd_depth; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;
};

inline bool grad_enabled() { return detail::nograd_depth == 0; }

template <typename T>
struct NodeT {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily at backward time
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void()> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class TensorT {
public:
    using Node = NodeT<T>;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> node) : n(std::move(node)) {}

    static TensorT zeros(Shape shape) {
        return constant(std::move(shape), {});
    }

    static TensorT constant(Shape shape, std::vector<T> data = {}) {
        auto node = std::make_shared<Node>();
        int64_t count = numel(shape);
        if (data.empty()) data.assign(size_t(count), T(0));
        if (int64_t(data.size()) != count)
            throw ShapeError("tensor data length does not match shape " + shape_str(shape));
        node->shape = std::move(shape);
        node->value = std::move(data);
        return TensorT(node);
    }

    static TensorT param(Shape shape, std::vector<T> data = {}) {
        TensorT t = constant(std::move(shape), std::move(data));
        t.n->requires_grad = true;
        return t;
    }

    bool defined() const { return bool(n); }
    const Shape& shape() const { return n->shape; }
    int64_t size() const { return int64_t(n->value.size()); }
    std::vector<T>& value() { return n->value; }
    const std::vector<T>& value() const { return n->value; }
    std::vector<T>& grad() { return n->grad; }
    const std::vector<T>& grad() const { return n->grad; }
    bool requires_grad() const { return n->requires_grad; }

    T item() const {
        if (n->value.size() != 1) throw ShapeError("item() requires a scalar tensor");
        return n->value[0];
    }

    void zero_grad() { n->grad.assign(n->value.size(), T(0)); }

    // Reverse-mode sweep from a scalar. Parents always appear later in the
    // postorder than their consumers' positions, so reverse order is safe.
    void backward() const {
        if (!n) throw NumericError("backward on an empty tensor");
        if (n->value.size() != 1) throw ShapeError("backward requires a scalar loss");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.push_back({n.get(), 0});
        seen.insert(n.get());
        while (!stack.empty()) {
            auto& top = stack.back();
            if (top.second < top.first->parents.size()) {
                Node* p = top.first->parents[top.second++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(top.first);
                stack.pop_back();
            }
        }
        for (Node* m : order) {
            m->ensure_grad();
            for (auto& p : m->parents) p->ensure_grad();
        }
        n->grad[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward) (*it)->backward();
    }

    std::shared_ptr<Node> n;
};

using Tensor = TensorT<float>;

namespace detail {

template <typename T>
std::shared_ptr<NodeT<T>> new_node(Shape shape, std::vector<T> value) {
    if (numel(shape) != int64_t(value.size()))
        throw ShapeError("op produced data not matching shape " + shape_str(shape));
    auto n = std::make_shared<NodeT<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

template <typename T>
void attach(const std::shared_ptr<NodeT<T>>& out,
            std::vector<std::shared_ptr<NodeT<T>>> parents, std::function<void()> backward) {
    if (!grad_enabled()) return;
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    if (!rg) return;
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward = std::move(backward);
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline int last_dim(const Shape& s) {
    if (s.empty()) throw ShapeError("rank-0 tensor has no last axis");
    return s.back();
}

inline int64_t row_count(const Shape& s) { return numel(s) / last_dim(s); }

} // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> v = a.value();
    for (size_t i = 0; i < v.size(); ++i) v[i] += b.value()[i];
    auto out = detail::new_node(a.shape(), std::move(v));
    detail::attach<T>(out, {a.n, b.n}, [an = a.n, bn = b.n, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i];
            bn->grad[i] += self->grad[i];
        }
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> v = a.value();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= b.value()[i];
    auto out = detail::new_node(a.shape(), std::move(v));
    detail::attach<T>(out, {a.n, b.n}, [an = a.n, bn = b.n, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i];
            bn->grad[i] -= self->grad[i];
        }
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> v = a.value();
    for (size_t i = 0; i < v.size(); ++i) v[i] *= b.value()[i];
    auto out = detail::new_node(a.shape(), std::move(v));
    detail::attach<T>(out, {a.n, b.n}, [an = a.n, bn = b.n, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) {
            an->grad[i] += self->grad[i] * bn->value[i];
            bn->grad[i] += self->grad[i] * an->value[i];
        }
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, double c) {
    std::vector<T> v = a.value();
    for (auto& x : v) x = T(x * c);
    auto out = detail::new_node(a.shape(), std::move(v));
    detail::attach<T>(out, {a.n}, [an = a.n, c, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += T(self->grad[i] * c);
    });
    return TensorT<T>(out);
}

// Adds a same-size constant buffer (positional encodings, masks-as-data).
template <typename T>
TensorT<T> add_const(const TensorT<T>& a, const std::vector<T>& data) {
    if (data.size() != a.value().size())
        throw ShapeError("add_const: buffer size does not match tensor");
    std::vector<T> v = a.value();
    for (size_t i = 0; i < v.size(); ++i) v[i] += data[i];
    auto out = detail::new_node(a.shape(), std::move(v));
    detail::attach<T>(out, {a.n}, [an = a.n, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
    });
    return TensorT<T>(out);
}

// x [..., d] + bias [d], broadcast over leading axes.
template <typename T>
TensorT<T> add_bias(const TensorT<T>& x, const TensorT<T>& b) {
    int d = detail::last_dim(x.shape());
    if (b.shape() != Shape{d})
        throw ShapeError("add_bias: bias must be [" + std::to_string(d) + "]");
    int64_t rows = detail::row_count(x.shape());
    std::vector<T> v = x.value();
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) v[size_t(r * d + j)] += b.value()[size_t(j)];
    auto out = detail::new_node(x.shape(), std::move(v));
    detail::attach<T>(out, {x.n, b.n}, [xn = x.n, bn = b.n, rows, d, self = out.get()] {
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) {
                T g = self->grad[size_t(r * d + j)];
                xn->grad[size_t(r * d + j)] += g;
                bn->grad[size_t(j)] += g;
            }
    });
    return TensorT<T>(out);
}

// x [B, L, d] + r [B, d], broadcast over the middle axis.
template <typename T>
TensorT<T> add_rows(const TensorT<T>& x, const TensorT<T>& r) {
    if (x.shape().size() != 3) throw ShapeError("add_rows: x must be rank 3");
    int B = x.shape()[0], L = x.shape()[1], d = x.shape()[2];
    if (r.shape() != Shape{B, d}) throw ShapeError("add_rows: r must be [B, d]");
    std::vector<T> v = x.value();
    for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
            for (int j = 0; j < d; ++j)
                v[size_t((int64_t(b) * L + l) * d + j)] += r.value()[size_t(b * d + j)];
    auto out = detail::new_node(x.shape(), std::move(v));
    detail::attach<T>(out, {x.n, r.n}, [xn = x.n, rn = r.n, B, L, d, self = out.get()] {
        for (int b = 0; b < B; ++b)
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < d; ++j) {
                    T g = self->grad[size_t((int64_t(b) * L + l) * d + j)];
                    xn->grad[size_t((int64_t(b) * L + l) * d + j)] += g;
                    rn->grad[size_t(b * d + j)] += g;
                }
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: need [m,k] x [k,n], got " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    int m = a.shape()[0], k = a.shape()[1], n2 = b.shape()[1];
    std::vector<T> v(size_t(int64_t(m) * n2));
    detail::gemm_nn(a.value().data(), b.value().data(), v.data(), m, k, n2, false);
    auto out = detail::new_node(Shape{m, n2}, std::move(v));
    detail::attach<T>(out, {a.n, b.n}, [an = a.n, bn = b.n, m, k, n2, self = out.get()] {
        detail::gemm_nt(self->grad.data(), bn->value.data(), an->grad.data(), m, n2, k, true);
        detail::gemm_tn(an->value.data(), self->grad.data(), bn->grad.data(), k, m, n2, true);
    });
    return TensorT<T>(out);
}

// x [..., din] -> [..., dout] with W [din, dout]; leading axes treated as rows.
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& b) {
    int din = detail::last_dim(x.shape());
    if (W.shape().size() != 2 || W.shape()[0] != din)
        throw ShapeError("linear: W must be [" + std::to_string(din) + ", dout]");
    int dout = W.shape()[1];
    if (b.defined() && b.shape() != Shape{dout})
        throw ShapeError("linear: bias must be [dout]");
    int64_t rows = detail::row_count(x.shape());
    std::vector<T> v(size_t(rows * dout));
    detail::gemm_nn(x.value().data(), W.value().data(), v.data(), int(rows), din, dout, false);
    if (b.defined())
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < dout; ++j) v[size_t(r * dout + j)] += b.value()[size_t(j)];
    Shape out_shape = x.shape();
    out_shape.back() = dout;
    auto out = detail::new_node(std::move(out_shape), std::move(v));
    std::vector<std::shared_ptr<NodeT<T>>> parents = {x.n, W.n};
    if (b.defined()) parents.push_back(b.n);
    detail::attach<T>(out, std::move(parents),
                      [xn = x.n, Wn = W.n, bn = b.n, rows, din, dout, self = out.get()] {
                          detail::gemm_nt(self->grad.data(), Wn->value.data(), xn->grad.data(),
                                          int(rows), dout, din, true);
                          detail::gemm_tn(xn->value.data(), self->grad.data(), Wn->grad.data(),
                                          din, int(rows), dout, true);
                          if (bn)
                              for (int64_t r = 0; r < rows; ++r)
                                  for (int j = 0; j < dout; ++j)
                                      bn->grad[size_t(j)] += self->grad[size_t(r * dout + j)];
                      });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& W) {
    return linear(x, W, TensorT<T>());
}

// Batched matmul over matching leading axes: a [..., m, k] x b [..., k, n],
// or b [..., n, k] when trans_b.
template <typename T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool trans_b = false) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sa.size() != sb.size())
        throw ShapeError("bmm: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    for (size_t i = 0; i + 2 < sa.size(); ++i)
        if (sa[i] != sb[i]) throw ShapeError("bmm: leading axes differ");
    int m = sa[sa.size() - 2], k = sa.back();
    int kb = trans_b ? sb.back() : sb[sb.size() - 2];
    int n2 = trans_b ? sb[sb.size() - 2] : sb.back();
    if (k != kb) throw ShapeError("bmm: inner dims differ");
    int64_t batch = 1;
    for (size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
    Shape out_shape(sa.begin(), sa.end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n2);
    std::vector<T> v(size_t(batch * m * n2));
    for (int64_t t = 0; t < batch; ++t) {
        const T* pa = a.value().data() + t * m * k;
        const T* pb = b.value().data() + t * k * n2;
        T* pc = v.data() + t * m * n2;
        if (trans_b)
            detail::gemm_nt(pa, pb, pc, m, k, n2, false);
        else
            detail::gemm_nn(pa, pb, pc, m, k, n2, false);
    }
    auto out = detail::new_node(std::move(out_shape), std::move(v));
    detail::attach<T>(out, {a.n, b.n},
                      [an = a.n, bn = b.n, batch, m, k, n2, trans_b, self = out.get()] {
                          for (int64_t t = 0; t < batch; ++t) {
                              const T* pa = an->value.data() + t * m * k;
                              const T* pb = bn->value.data() + t * k * n2;
                              const T* pg = self->grad.data() + t * m * n2;
                              T* da = an->grad.data() + t * m * k;
                              T* db = bn->grad.data() + t * k * n2;
                              if (trans_b) {
                                  // C = A B^T: dA += dC B, dB += dC^T A
                                  detail::gemm_nn(pg, pb, da, m, n2, k, true);
                                  detail::gemm_tn(pg, pa, db, n2, m, k, true);
                              } else {
                                  detail::gemm_nt(pg, pb, da, m, n2, k, true);
                                  detail::gemm_tn(pa, pg, db, k, m, n2, true);
                              }
                          }
                      });
    return TensorT<T>(out);
}

// [B, L, d] -> [B, H, L, d/H]
template <typename T>
TensorT<T> split_heads(const TensorT<T>& x, int heads) {
    if (x.shape().size() != 3) throw ShapeError("split_heads: x must be [B, L, d]");
    int B = x.shape()[0], L = x.shape()[1], d = x.shape()[2];
    if (heads < 1 || d % heads != 0)
        throw ShapeError("split_heads: d_model not divisible by heads");
    int dh = d / heads;
    std::vector<T> v(x.value().size());
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h)
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < dh; ++j)
                    v[size_t(((int64_t(b) * heads + h) * L + l) * dh + j)] =
                        x.value()[size_t((int64_t(b) * L + l) * d + h * dh + j)];
    auto out = detail::new_node(Shape{B, heads, L, dh}, std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, B, heads, L, dh, d, self = out.get()] {
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < heads; ++h)
                for (int l = 0; l < L; ++l)
                    for (int j = 0; j < dh; ++j)
                        xn->grad[size_t((int64_t(b) * L + l) * d + h * dh + j)] +=
                            self->grad[size_t(((int64_t(b) * heads + h) * L + l) * dh + j)];
    });
    return TensorT<T>(out);
}

// [B, H, L, dh] -> [B, L, H*dh]
template <typename T>
TensorT<T> merge_heads(const TensorT<T>& x) {
    if (x.shape().size() != 4) throw ShapeError("merge_heads: x must be [B, H, L, dh]");
    int B = x.shape()[0], H = x.shape()[1], L = x.shape()[2], dh = x.shape()[3];
    int d = H * dh;
    std::vector<T> v(x.value().size());
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < dh; ++j)
                    v[size_t((int64_t(b) * L + l) * d + h * dh + j)] =
                        x.value()[size_t(((int64_t(b) * H + h) * L + l) * dh + j)];
    auto out = detail::new_node(Shape{B, L, d}, std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, B, H, L, dh, d, self = out.get()] {
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int l = 0; l < L; ++l)
                    for (int j = 0; j < dh; ++j)
                        xn->grad[size_t(((int64_t(b) * H + h) * L + l) * dh + j)] +=
                            self->grad[size_t((int64_t(b) * L + l) * d + h * dh + j)];
    });
    return TensorT<T>(out);
}

// Normalizes the last axis with biased variance; y = gamma * xhat + beta.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      double eps = 1e-5) {
    int d = detail::last_dim(x.shape());
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
        throw ShapeError("layer_norm: gamma/beta must be [d]");
    int64_t rows = detail::row_count(x.shape());
    std::vector<T> xhat(x.value().size());
    std::vector<T> inv(static_cast<size_t>(rows));
    std::vector<T> v(x.value().size());
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x.value().data() + r * d;
        T mu = 0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= T(d);
        T var = 0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= T(d);
        T iv = T(1) / std::sqrt(var + T(eps));
        inv[size_t(r)] = iv;
        for (int j = 0; j < d; ++j) {
            T h = (xr[j] - mu) * iv;
            xhat[size_t(r * d + j)] = h;
            v[size_t(r * d + j)] = gamma.value()[size_t(j)] * h + beta.value()[size_t(j)];
        }
    }
    auto out = detail::new_node(x.shape(), std::move(v));
    detail::attach<T>(out, {x.n, gamma.n, beta.n},
                      [xn = x.n, gn = gamma.n, bn = beta.n, rows, d, xhat = std::move(xhat),
                       inv = std::move(inv), self = out.get()] {
                          for (int64_t r = 0; r < rows; ++r) {
                              const T* g = self->grad.data() + r * d;
                              const T* h = xhat.data() + r * d;
                              T sum1 = 0, sum2 = 0;
                              for (int j = 0; j < d; ++j) {
                                  T dh = g[j] * gn->value[size_t(j)];
                                  sum1 += dh;
                                  sum2 += dh * h[j];
                              }
                              for (int j = 0; j < d; ++j) {
                                  T dh = g[j] * gn->value[size_t(j)];
                                  xn->grad[size_t(r * d + j)] +=
                                      inv[size_t(r)] * (dh - (sum1 + h[j] * sum2) / T(d));
                                  gn->grad[size_t(j)] += g[j] * h[j];
                                  bn->grad[size_t(j)] += g[j];
                              }
                          }
                      });
    return TensorT<T>(out);
}

// Exact erf form: 0.5 x (1 + erf(x / sqrt(2))).
template <typename T>
TensorT<T> gelu(const TensorT<T>& x) {
    const T inv_sqrt2 = T(0.7071067811865475244);
    const T inv_sqrt2pi = T(0.3989422804014326779);
    std::vector<T> v(x.value().size());
    for (size_t i = 0; i < v.size(); ++i) {
        T xi = x.value()[i];
        v[i] = T(0.5) * xi * (T(1) + std::erf(xi * inv_sqrt2));
    }
    auto out = detail::new_node(x.shape(), std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, inv_sqrt2, inv_sqrt2pi, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) {
            T xi = xn->value[i];
            T cdf = T(0.5) * (T(1) + std::erf(xi * inv_sqrt2));
            T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xi * xi);
            xn->grad[i] += self->grad[i] * (cdf + xi * pdf);
        }
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> softmax_lastdim(const TensorT<T>& x) {
    int d = detail::last_dim(x.shape());
    int64_t rows = detail::row_count(x.shape());
    std::vector<T> v(x.value().size());
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x.value().data() + r * d;
        T* yr = v.data() + r * d;
        T mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        T sum = 0;
        for (int j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < d; ++j) yr[j] /= sum;
    }
    auto out = detail::new_node(x.shape(), std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, rows, d, self = out.get()] {
        for (int64_t r = 0; r < rows; ++r) {
            const T* y = self->value.data() + r * d;
            const T* g = self->grad.data() + r * d;
            T dot = 0;
            for (int j = 0; j < d; ++j) dot += g[j] * y[j];
            for (int j = 0; j < d; ++j) xn->grad[size_t(r * d + j)] += y[j] * (g[j] - dot);
        }
    });
    return TensorT<T>(out);
}

// scores [B, H, Lq, Lk] plus an additive bias buffer [B * Lq * Lk], broadcast
// over heads. The bias carries mask terms (large negatives), not parameters.
template <typename T>
TensorT<T> add_attn_bias(const TensorT<T>& scores, const std::vector<T>& bias) {
    if (scores.shape().size() != 4) throw ShapeError("add_attn_bias: scores must be rank 4");
    int B = scores.shape()[0], H = scores.shape()[1], Lq = scores.shape()[2],
        Lk = scores.shape()[3];
    if (int64_t(bias.size()) != int64_t(B) * Lq * Lk)
        throw ShapeError("add_attn_bias: bias must be B*Lq*Lk");
    std::vector<T> v = scores.value();
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int q = 0; q < Lq; ++q)
                for (int k = 0; k < Lk; ++k)
                    v[size_t((((int64_t(b) * H + h) * Lq) + q) * Lk + k)] +=
                        bias[size_t((int64_t(b) * Lq + q) * Lk + k)];
    auto out = detail::new_node(scores.shape(), std::move(v));
    detail::attach<T>(out, {scores.n}, [sn = scores.n, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) sn->grad[i] += self->grad[i];
    });
    return TensorT<T>(out);
}

// x [B, L, d] with a per-slot liveness mask [B * L] -> [B, d] mean over live
// slots. A batch element with no live slots pools to zero.
template <typename T>
TensorT<T> masked_mean_pool(const TensorT<T>& x, const std::vector<uint8_t>& mask) {
    if (x.shape().size() != 3) throw ShapeError("masked_mean_pool: x must be [B, L, d]");
    int B = x.shape()[0], L = x.shape()[1], d = x.shape()[2];
    if (int64_t(mask.size()) != int64_t(B) * L)
        throw ShapeError("masked_mean_pool: mask must be B*L");
    std::vector<T> v(size_t(int64_t(B) * d), T(0));
    std::vector<T> inv_cnt(size_t(B), T(0));
    for (int b = 0; b < B; ++b) {
        int cnt = 0;
        for (int l = 0; l < L; ++l)
            if (mask[size_t(b * L + l)]) {
                ++cnt;
                for (int j = 0; j < d; ++j)
                    v[size_t(b * d + j)] += x.value()[size_t((int64_t(b) * L + l) * d + j)];
            }
        if (cnt > 0) {
            inv_cnt[size_t(b)] = T(1) / T(cnt);
            for (int j = 0; j < d; ++j) v[size_t(b * d + j)] *= inv_cnt[size_t(b)];
        }
    }
    auto out = detail::new_node(Shape{B, d}, std::move(v));
    detail::attach<T>(out, {x.n},
                      [xn = x.n, mask, inv_cnt = std::move(inv_cnt), B, L, d, self = out.get()] {
                          for (int b = 0; b < B; ++b)
                              for (int l = 0; l < L; ++l)
                                  if (mask[size_t(b * L + l)])
                                      for (int j = 0; j < d; ++j)
                                          xn->grad[size_t((int64_t(b) * L + l) * d + j)] +=
                                              self->grad[size_t(b * d + j)] * inv_cnt[size_t(b)];
                      });
    return TensorT<T>(out);
}

// x [B, L, d] with a per-slot liveness mask -> [B, d] max over live slots.
// Gradient routes to the argmax slot; no live slots pools to zero.
template <typename T>
TensorT<T> masked_max_pool(const TensorT<T>& x, const std::vector<uint8_t>& mask) {
    if (x.shape().size() != 3) throw ShapeError("masked_max_pool: x must be [B, L, d]");
    int B = x.shape()[0], L = x.shape()[1], d = x.shape()[2];
    if (int64_t(mask.size()) != int64_t(B) * L)
        throw ShapeError("masked_max_pool: mask must be B*L");
    std::vector<T> v(size_t(int64_t(B) * d), T(0));
    std::vector<int> arg(size_t(int64_t(B) * d), -1);
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < d; ++j) {
            bool seen = false;
            T best = 0;
            int bi = -1;
            for (int l = 0; l < L; ++l) {
                if (!mask[size_t(b * L + l)]) continue;
                T cand = x.value()[size_t((int64_t(b) * L + l) * d + j)];
                if (!seen || cand > best) {
                    best = cand;
                    bi = l;
                    seen = true;
                }
            }
            if (seen) {
                v[size_t(b * d + j)] = best;
                arg[size_t(b * d + j)] = bi;
            }
        }
    auto out = detail::new_node(Shape{B, d}, std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, arg = std::move(arg), B, L, d, self = out.get()] {
        for (int b = 0; b < B; ++b)
            for (int j = 0; j < d; ++j) {
                int l = arg[size_t(b * d + j)];
                if (l >= 0)
                    xn->grad[size_t((int64_t(b) * L + l) * d + j)] +=
                        self->grad[size_t(b * d + j)];
            }
    });
    return TensorT<T>(out);
}

// Embedding lookup: table [V, d], flat indices -> [leading..., d].
// Backward scatter-adds into the table.
template <typename T>
TensorT<T> gather_rows(const TensorT<T>& table, const std::vector<int>& idx, Shape leading) {
    if (table.shape().size() != 2) throw ShapeError("gather_rows: table must be [V, d]");
    int V = table.shape()[0], d = table.shape()[1];
    if (numel(leading) != int64_t(idx.size()))
        throw ShapeError("gather_rows: leading shape does not match index count");
    for (int i : idx)
        if (i < 0 || i >= V) throw ShapeError("gather_rows: index out of range");
    std::vector<T> v(idx.size() * size_t(d));
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(table.value().data() + int64_t(idx[r]) * d, d, v.data() + int64_t(r) * d);
    Shape out_shape = std::move(leading);
    out_shape.push_back(d);
    auto out = detail::new_node(std::move(out_shape), std::move(v));
    detail::attach<T>(out, {table.n}, [tn = table.n, idx, d, self = out.get()] {
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < d; ++j)
                tn->grad[size_t(int64_t(idx[r]) * d + j)] +=
                    self->grad[size_t(int64_t(r) * d + j)];
    });
    return TensorT<T>(out);
}

// tok [d] -> [B, L, d]; backward sums every slot's gradient into the token.
template <typename T>
TensorT<T> expand_token(const TensorT<T>& tok, int B, int L) {
    if (tok.shape().size() != 1) throw ShapeError("expand_token: token must be [d]");
    int d = tok.shape()[0];
    std::vector<T> v(size_t(int64_t(B) * L * d));
    for (int64_t r = 0; r < int64_t(B) * L; ++r)
        std::copy_n(tok.value().data(), d, v.data() + r * d);
    auto out = detail::new_node(Shape{B, L, d}, std::move(v));
    detail::attach<T>(out, {tok.n}, [tn = tok.n, B, L, d, self = out.get()] {
        for (int64_t r = 0; r < int64_t(B) * L; ++r)
            for (int j = 0; j < d; ++j) tn->grad[size_t(j)] += self->grad[size_t(r * d + j)];
    });
    return TensorT<T>(out);
}

// [B, L, d] -> [B, len, d] keeping slots [start, start+len).
template <typename T>
TensorT<T> slice_axis1(const TensorT<T>& x, int start, int len) {
    if (x.shape().size() != 3) throw ShapeError("slice_axis1: x must be rank 3");
    int B = x.shape()[0], L = x.shape()[1], d = x.shape()[2];
    if (start < 0 || len < 0 || start + len > L) throw ShapeError("slice_axis1: out of range");
    std::vector<T> v(size_t(int64_t(B) * len * d));
    for (int b = 0; b < B; ++b)
        std::copy_n(x.value().data() + (int64_t(b) * L + start) * d, int64_t(len) * d,
                    v.data() + int64_t(b) * len * d);
    auto out = detail::new_node(Shape{B, len, d}, std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, B, L, d, start, len, self = out.get()] {
        for (int b = 0; b < B; ++b)
            for (int64_t i = 0; i < int64_t(len) * d; ++i)
                xn->grad[size_t((int64_t(b) * L + start) * d + i)] +=
                    self->grad[size_t(int64_t(b) * len * d + i)];
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> concat_axis1(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape().size() != 3 || b.shape().size() != 3 || a.shape()[0] != b.shape()[0] ||
        a.shape()[2] != b.shape()[2])
        throw ShapeError("concat_axis1: need [B, La, d] and [B, Lb, d]");
    int B = a.shape()[0], La = a.shape()[1], Lb = b.shape()[1], d = a.shape()[2];
    int L = La + Lb;
    std::vector<T> v(size_t(int64_t(B) * L * d));
    for (int bb = 0; bb < B; ++bb) {
        std::copy_n(a.value().data() + int64_t(bb) * La * d, int64_t(La) * d,
                    v.data() + int64_t(bb) * L * d);
        std::copy_n(b.value().data() + int64_t(bb) * Lb * d, int64_t(Lb) * d,
                    v.data() + (int64_t(bb) * L + La) * d);
    }
    auto out = detail::new_node(Shape{B, L, d}, std::move(v));
    detail::attach<T>(out, {a.n, b.n}, [an = a.n, bn = b.n, B, La, Lb, L, d, self = out.get()] {
        for (int bb = 0; bb < B; ++bb) {
            for (int64_t i = 0; i < int64_t(La) * d; ++i)
                an->grad[size_t(int64_t(bb) * La * d + i)] +=
                    self->grad[size_t(int64_t(bb) * L * d + i)];
            for (int64_t i = 0; i < int64_t(Lb) * d; ++i)
                bn->grad[size_t(int64_t(bb) * Lb * d + i)] +=
                    self->grad[size_t((int64_t(bb) * L + La) * d + i)];
        }
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape s) {
    if (numel(s) != x.size()) throw ShapeError("reshape: element count mismatch");
    std::vector<T> v = x.value();
    auto out = detail::new_node(std::move(s), std::move(v));
    detail::attach<T>(out, {x.n}, [xn = x.n, self = out.get()] {
        for (size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> sum_all(const TensorT<T>& x) {
    T s = 0;
    for (T v : x.value()) s += v;
    auto out = detail::new_node(Shape{1}, std::vector<T>{s});
    detail::attach<T>(out, {x.n}, [xn = x.n, self = out.get()] {
        for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self->grad[0];
    });
    return TensorT<T>(out);
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& x) {
    return scale(sum_all(x), 1.0 / double(x.size()));
}

// Mean squared error over the unmasked rows of pred [..., C] against a raw
// target buffer; mask has one flag per row. Mean is over unmasked scalar
// entries (row count * C).
template <typename T>
TensorT<T> masked_mse(const TensorT<T>& pred, const std::vector<T>& target,
                      const std::vector<uint8_t>& mask) {
    int C = detail::last_dim(pred.shape());
    int64_t rows = detail::row_count(pred.shape());
    if (target.size() != pred.value().size()) throw ShapeError("masked_mse: target size");
    if (int64_t(mask.size()) != rows) throw ShapeError("masked_mse: mask must have one flag per row");
    int64_t live = 0;
    for (uint8_t m : mask) live += m ? 1 : 0;
    T denom = T(live) * T(C);
    T loss = 0;
    if (live > 0) {
        for (int64_t r = 0; r < rows; ++r) {
            if (!mask[size_t(r)]) continue;
            for (int c = 0; c < C; ++c) {
                T diff = pred.value()[size_t(r * C + c)] - target[size_t(r * C + c)];
                loss += diff * diff;
            }
        }
        loss /= denom;
    }
    auto out = detail::new_node(Shape{1}, std::vector<T>{loss});
    detail::attach<T>(out, {pred.n},
                      [pn = pred.n, target, mask, rows, C, denom, live, self = out.get()] {
                          if (live == 0) return;
                          T g = self->grad[0];
                          for (int64_t r = 0; r < rows; ++r) {
                              if (!mask[size_t(r)]) continue;
                              for (int c = 0; c < C; ++c)
                                  pn->grad[size_t(r * C + c)] +=
                                      g * T(2) *
                                      (pn->value[size_t(r * C + c)] - target[size_t(r * C + c)]) /
                                      denom;
                          }
                      });
    return TensorT<T>(out);
}

// Stable softmax cross-entropy, weighted mean over rows. logits [..., C],
// one target and one weight per row (weights are 0/1 masks or importance).
template <typename T>
TensorT<T> cross_entropy_mean(const TensorT<T>& logits, const std::vector<int>& targets,
                              const std::vector<T>& weights) {
    int C = detail::last_dim(logits.shape());
    int64_t rows = detail::row_count(logits.shape());
    if (int64_t(targets.size()) != rows || int64_t(weights.size()) != rows)
        throw ShapeError("cross_entropy_mean: one target and weight per row required");
    T wsum = 0;
    for (T w : weights) wsum += w;
    std::vector<T> probs(logits.value().size());
    T loss = 0;
    for (int64_t r = 0; r < rows; ++r) {
        int t = targets[size_t(r)];
        if (t < 0 || t >= C) throw NumericError("cross_entropy_mean: label out of range");
        const T* z = logits.value().data() + r * C;
        T* p = probs.data() + r * C;
        T mx = z[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, z[c]);
        T sum = 0;
        for (int c = 0; c < C; ++c) {
            p[c] = std::exp(z[c] - mx);
            sum += p[c];
        }
        for (int c = 0; c < C; ++c) p[c] /= sum;
        if (weights[size_t(r)] != T(0))
            loss += weights[size_t(r)] * (std::log(sum) + mx - z[t]);
    }
    if (wsum > T(0)) loss /= wsum;
    auto out = detail::new_node(Shape{1}, std::vector<T>{loss});
    detail::attach<T>(out, {logits.n},
                      [ln = logits.n, targets, weights, probs = std::move(probs), rows, C, wsum,
                       self = out.get()] {
                          if (wsum <= T(0)) return;
                          T g = self->grad[0];
                          for (int64_t r = 0; r < rows; ++r) {
                              T w = weights[size_t(r)];
                              if (w == T(0)) continue;
                              for (int c = 0; c < C; ++c) {
                                  T p = probs[size_t(r * C + c)];
                                  T y = (c == targets[size_t(r)]) ? T(1) : T(0);
                                  ln->grad[size_t(r * C + c)] += g * w * (p - y) / wsum;
                              }
                          }
                      });
    return TensorT<T>(out);
}

// Attention masks combine causality and key padding; they materialize as an
// additive bias over logits. Large-negative rather than -inf so arithmetic
// stays finite; exp underflows to exactly zero after max subtraction.
struct AttentionMask {
    bool causal = false;
    std::vector<uint8_t> key_live;  // [B * Lk]; empty = all live
    int batch = 0;
    int key_len = 0;

    static AttentionMask none() { return {}; }
    static AttentionMask causal_only() {
        AttentionMask m;
        m.causal = true;
        return m;
    }
    static AttentionMask padding(std::vector<uint8_t> live, int B, int Lk) {
        AttentionMask m;
        m.key_live = std::move(live);
        m.batch = B;
        m.key_len = Lk;
        return m;
    }
    static AttentionMask causal_padding(std::vector<uint8_t> live, int B, int Lk) {
        AttentionMask m = padding(std::move(live), B, Lk);
        m.causal = true;
        return m;
    }

    template <typename T>
    std::vector<T> bias(int B, int Lq, int Lk) const {
        const T neg = T(-1e30);
        std::vector<T> out(size_t(int64_t(B) * Lq * Lk), T(0));
        if (!key_live.empty() && (batch != B || key_len != Lk))
            throw ShapeError("attention mask sized for a different batch");
        for (int b = 0; b < B; ++b)
            for (int q = 0; q < Lq; ++q)
                for (int k = 0; k < Lk; ++k) {
                    bool blocked = false;
                    if (causal && k > q) blocked = true;
                    if (!key_live.empty() && !key_live[size_t(b * Lk + k)]) blocked = true;
                    if (blocked) out[size_t((int64_t(b) * Lq + q) * Lk + k)] = neg;
                }
        return out;
    }
};

// Scaled dot-product multi-head attention. q, k, v are [B, L, d] inputs
// (already projected upstream or raw; this op does the head split, softmax
// and merge only). Returns [B, Lq, d].
template <typename T>
TensorT<T> multi_head_attention(const TensorT<T>& q, const TensorT<T>& k, const TensorT<T>& v,
                                int heads, const AttentionMask& mask) {
    if (q.shape().size() != 3 || k.shape().size() != 3 || v.shape().size() != 3)
        throw ShapeError("attention: inputs must be [B, L, d]");
    int B = q.shape()[0], Lq = q.shape()[1], d = q.shape()[2];
    int Lk = k.shape()[1];
    if (k.shape()[0] != B || v.shape()[0] != B || v.shape()[1] != Lk || k.shape()[2] != d ||
        v.shape()[2] != d)
        throw ShapeError("attention: q/k/v shapes inconsistent");
    if (d % heads != 0) throw ShapeError("attention: d_model not divisible by heads");
    int dh = d / heads;
    auto qh = split_heads(q, heads);
    auto kh = split_heads(k, heads);
    auto vh = split_heads(v, heads);
    auto scores = scale(bmm(qh, kh, true), 1.0 / std::sqrt(double(dh)));
    scores = add_attn_bias(scores, mask.template bias<T>(B, Lq, Lk));
    auto attn = softmax_lastdim(scores);
    return merge_heads(bmm(attn, vh));
}

} // namespace sketchlab
