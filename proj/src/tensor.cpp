#include "stylepipe/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "stylepipe/kernels.hpp"

namespace stylepipe {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<bool> g_finite_checks{false};
}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks() { return g_finite_checks.load(std::memory_order_relaxed); }

namespace detail {

real* Node::grad_data() {
    if (grad.empty()) grad.assign(data.size(), real(0));
    return grad.data();
}

}  // namespace detail

using detail::Node;

namespace {

std::shared_ptr<Node> make_node(Shape shape) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data.resize(static_cast<size_t>(numel_of(n->shape)));
    return n;
}

void validate_shape(const Shape& shape) {
    for (int64_t e : shape)
        if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
}

// attach graph metadata if grad mode is on and any parent needs grad
Tensor finish(std::shared_ptr<Node> out, std::vector<Tensor> parents,
              std::function<void(Node&)> backward_fn, const char* opname) {
    bool need = false;
    if (g_grad_enabled)
        for (const auto& p : parents) need = need || p.requires_grad();
    if (need) {
        out->requires_grad = true;
        out->parents.reserve(parents.size());
        for (auto& p : parents) out->parents.push_back(p.node());
        out->backward_fn = std::move(backward_fn);
    }
    Tensor t(std::move(out));
    if (finite_checks()) check_finite(t, opname);
    return t;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    validate_shape(shape);
    return Tensor(make_node(std::move(shape)));
}

Tensor Tensor::full(Shape shape, real v) {
    validate_shape(shape);
    auto n = make_node(std::move(shape));
    std::fill(n->data.begin(), n->data.end(), v);
    return Tensor(std::move(n));
}

Tensor Tensor::from_vector(Shape shape, std::vector<real> values) {
    validate_shape(shape);
    if (numel_of(shape) != static_cast<int64_t>(values.size()))
        throw DimensionError("from_vector: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::randn(Shape shape, Rng& rng, real stddev) {
    validate_shape(shape);
    auto n = make_node(std::move(shape));
    for (auto& v : n->data) v = static_cast<real>(rng.normal()) * stddev;
    return Tensor(std::move(n));
}

real Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    return Tensor(std::move(n));
}

Tensor Tensor::detached() const { return clone(); }

void Tensor::backward() {
    if (numel() != 1)
        throw ContractError("backward() requires a scalar, got shape " + shape_str(shape()));
    // iterative post-order over the requires_grad subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // interior grads are scratch; leaf grads persist and accumulate
    for (Node* n : order)
        if (!n->is_leaf() && !n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), real(0));
    node_->grad_data()[0] += real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

void check_finite(const Tensor& t, const char* where) {
    const real* x = t.data();
    for (int64_t i = 0, n = t.numel(); i < n; ++i)
        if (!std::isfinite(x[i]))
            throw NumericError(std::string("non-finite value in ") + where + " at index " +
                               std::to_string(i));
}

bool same_values(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::equal(a.data(), a.data() + a.numel(), b.data());
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    real m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace {

// leading-dim broadcast: b's shape must equal a trailing slice of a's shape
void check_broadcast(const Shape& a, const Shape& b, const char* op) {
    if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin()))
        throw DimensionError(std::string(op) + ": shape " + shape_str(b) +
                             " does not broadcast onto " + shape_str(a));
}

// accumulates dY (shape of a) into db (suffix shape), summing leading dims
void reduce_to_suffix(const real* dy, real* db, int64_t n, int64_t bn) {
    for (int64_t i = 0; i < n; ++i) db[i % bn] += dy[i];
}

Tensor ewise(const Tensor& a, const Tensor& b, const char* op,
             void (*fwd)(const real*, const real*, real*, int64_t),
             const std::function<void(Node&, Node&, Node&, int64_t, int64_t)>& bwd) {
    check_broadcast(a.shape(), b.shape(), op);
    const int64_t n = a.numel(), bn = b.numel();
    auto out = make_node(a.shape());
    if (n == bn) {
        fwd(a.data(), b.data(), out->data.data(), n);
    } else {
        for (int64_t off = 0; off < n; off += bn)
            fwd(a.data() + off, b.data(), out->data.data() + off, bn);
    }
    auto an = a.node(), bnode = b.node();
    return finish(
        out, {a, b},
        [an, bnode, bwd, n, bn](Node& self) { bwd(self, *an, *bnode, n, bn); }, op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return ewise(a, b, "add", kernels::add, [](Node& self, Node& an, Node& bn, int64_t n, int64_t bcount) {
        if (an.requires_grad) kernels::axpy(1, self.grad.data(), an.grad_data(), n);
        if (bn.requires_grad) reduce_to_suffix(self.grad.data(), bn.grad_data(), n, bcount);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ewise(a, b, "sub", kernels::sub, [](Node& self, Node& an, Node& bn, int64_t n, int64_t bcount) {
        if (an.requires_grad) kernels::axpy(1, self.grad.data(), an.grad_data(), n);
        if (bn.requires_grad) {
            real* db = bn.grad_data();
            const real* dy = self.grad.data();
            for (int64_t i = 0; i < n; ++i) db[i % bcount] -= dy[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ewise(a, b, "mul", kernels::mul, [](Node& self, Node& an, Node& bn, int64_t n, int64_t bcount) {
        const real* dy = self.grad.data();
        if (an.requires_grad) {
            real* da = an.grad_data();
            const real* bv = bn.data.data();
            for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i % bcount];
        }
        if (bn.requires_grad) {
            real* db = bn.grad_data();
            const real* av = an.data.data();
            for (int64_t i = 0; i < n; ++i) db[i % bcount] += dy[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, real s) {
    auto out = make_node(a.shape());
    kernels::scale(a.data(), s, out->data.data(), a.numel());
    auto an = a.node();
    return finish(
        out, {a},
        [an, s](Node& self) {
            if (an->requires_grad)
                kernels::axpy(s, self.grad.data(), an->grad_data(), self.numel());
        },
        "scale");
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw DimensionError("matmul: ranks " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const int64_t m = a.extent(a.rank() - 2), k = a.extent(a.rank() - 1);
    const int64_t k2 = b.extent(b.rank() - 2), p = b.extent(b.rank() - 1);
    if (k != k2)
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    Shape abatch(a.shape().begin(), a.shape().end() - 2);
    Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    if (!abatch.empty() && !bbatch.empty() && abatch != bbatch)
        throw DimensionError("matmul: batch extents differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const Shape& batch = abatch.empty() ? bbatch : abatch;
    const int64_t nb = numel_of(batch);
    const bool abat = !abatch.empty(), bbat = !bbatch.empty();

    Shape oshape = batch;
    oshape.push_back(m);
    oshape.push_back(p);
    auto out = make_node(std::move(oshape));
    for (int64_t i = 0; i < nb; ++i)
        kernels::matmul_nn(a.data() + (abat ? i * m * k : 0), b.data() + (bbat ? i * k * p : 0),
                           out->data.data() + i * m * p, m, k, p);

    auto an = a.node(), bn = b.node();
    return finish(
        out, {a, b},
        [an, bn, m, k, p, nb, abat, bbat](Node& self) {
            const real* dy = self.grad.data();
            for (int64_t i = 0; i < nb; ++i) {
                const real* dyi = dy + i * m * p;
                const real* ai = an->data.data() + (abat ? i * m * k : 0);
                const real* bi = bn->data.data() + (bbat ? i * k * p : 0);
                if (an->requires_grad)
                    kernels::matmul_nt(dyi, bi, an->grad_data() + (abat ? i * m * k : 0), m, p, k,
                                       true);
                if (bn->requires_grad)
                    kernels::matmul_tn(ai, dyi, bn->grad_data() + (bbat ? i * k * p : 0), m, k, p,
                                       true);
            }
        },
        "matmul");
}

// ---------------------------------------------------------------------------
// softmax / layernorm / gelu

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() < 1 || x.numel() == 0)
        throw DimensionError("softmax_lastdim: empty tensor");
    const int64_t cols = x.extent(x.rank() - 1);
    const int64_t rows = x.numel() / cols;
    auto out = make_node(x.shape());
    kernels::softmax_rows(x.data(), out->data.data(), rows, cols);
    auto xn = x.node();
    return finish(
        out, {x},
        [xn, rows, cols](Node& self) {
            if (xn->requires_grad)
                kernels::softmax_rows_backward(self.data.data(), self.grad.data(), xn->grad_data(),
                                               rows, cols);
        },
        "softmax_lastdim");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
    const int64_t cols = x.extent(x.rank() - 1);
    const int64_t rows = x.numel() / cols;
    if (gain.numel() != cols || bias.numel() != cols)
        throw DimensionError("layer_norm: gain/bias must match last extent " +
                             std::to_string(cols));
    auto out = make_node(x.shape());
    auto saved = std::make_shared<std::vector<real>>(2 * rows);
    kernels::layernorm_rows(x.data(), gain.data(), bias.data(), out->data.data(), saved->data(),
                            saved->data() + rows, rows, cols, eps);
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return finish(
        out, {x, gain, bias},
        [xn, gn, bn, saved, rows, cols](Node& self) {
            std::vector<real> dg(cols, 0), db(cols, 0);
            std::vector<real> dx_local;
            real* dxp = nullptr;
            if (xn->requires_grad) dxp = xn->grad_data();
            else {
                dx_local.assign(static_cast<size_t>(rows * cols), 0);
                dxp = dx_local.data();
            }
            kernels::layernorm_rows_backward(xn->data.data(), gn->data.data(), saved->data(),
                                             saved->data() + rows, self.grad.data(), dxp, dg.data(),
                                             db.data(), rows, cols);
            if (gn->requires_grad) kernels::axpy(1, dg.data(), gn->grad_data(), cols);
            if (bn->requires_grad) kernels::axpy(1, db.data(), bn->grad_data(), cols);
        },
        "layer_norm");
}

Tensor gelu(const Tensor& x) {
    auto out = make_node(x.shape());
    kernels::gelu(x.data(), out->data.data(), x.numel());
    auto xn = x.node();
    return finish(
        out, {x},
        [xn](Node& self) {
            if (xn->requires_grad)
                kernels::gelu_backward(xn->data.data(), self.grad.data(), xn->grad_data(),
                                       self.numel());
        },
        "gelu");
}

// ---------------------------------------------------------------------------
// shape ops

Tensor reshape(const Tensor& x, Shape shape) {
    validate_shape(shape);
    if (numel_of(shape) != x.numel())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    auto out = make_node(std::move(shape));
    kernels::copy(x.data(), out->data.data(), x.numel());
    auto xn = x.node();
    return finish(
        out, {x},
        [xn](Node& self) {
            if (xn->requires_grad)
                kernels::axpy(1, self.grad.data(), xn->grad_data(), self.numel());
        },
        "reshape");
}

namespace {

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// y[i0,i1,...] = x[i_{axes[0]}, ...]; returns mapping out_index -> in_index
void permute_copy(const real* x, real* y, const Shape& in_shape, const std::vector<int>& axes) {
    const int r = static_cast<int>(in_shape.size());
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
    const auto in_str = row_major_strides(in_shape);
    std::vector<int64_t> step(r);
    for (int i = 0; i < r; ++i) step[i] = in_str[axes[i]];
    const int64_t n = numel_of(in_shape);
    std::vector<int64_t> idx(r, 0);
    int64_t src = 0;
    for (int64_t o = 0; o < n; ++o) {
        y[o] = x[src];
        for (int i = r - 1; i >= 0; --i) {
            src += step[i];
            if (++idx[i] < out_shape[i]) break;
            src -= step[i] * out_shape[i];
            idx[i] = 0;
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r)
        throw DimensionError("permute: axes size " + std::to_string(axes.size()) + " for rank " +
                             std::to_string(r));
    std::vector<bool> used(r, false);
    for (int a : axes) {
        if (a < 0 || a >= r || used[a]) throw DimensionError("permute: invalid axes");
        used[a] = true;
    }
    Shape oshape(r);
    for (int i = 0; i < r; ++i) oshape[i] = x.extent(axes[i]);
    auto out = make_node(std::move(oshape));
    permute_copy(x.data(), out->data.data(), x.shape(), axes);
    auto xn = x.node();
    std::vector<int> inv(r);
    for (int i = 0; i < r; ++i) inv[axes[i]] = i;
    return finish(
        out, {x},
        [xn, inv](Node& self) {
            if (!xn->requires_grad) return;
            std::vector<real> tmp(self.grad.size());
            permute_copy(self.grad.data(), tmp.data(), self.shape, inv);
            kernels::axpy(1, tmp.data(), xn->grad_data(), xn->numel());
        },
        "permute");
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank()) throw DimensionError("concat_lastdim: rank mismatch");
    for (int i = 0; i + 1 < a.rank(); ++i)
        if (a.extent(i) != b.extent(i))
            throw DimensionError("concat_lastdim: " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
    const int64_t ca = a.extent(a.rank() - 1), cb = b.extent(b.rank() - 1);
    const int64_t rows = a.numel() / ca;
    Shape oshape = a.shape();
    oshape.back() = ca + cb;
    auto out = make_node(std::move(oshape));
    for (int64_t r = 0; r < rows; ++r) {
        kernels::copy(a.data() + r * ca, out->data.data() + r * (ca + cb), ca);
        kernels::copy(b.data() + r * cb, out->data.data() + r * (ca + cb) + ca, cb);
    }
    auto an = a.node(), bn = b.node();
    return finish(
        out, {a, b},
        [an, bn, rows, ca, cb](Node& self) {
            const real* dy = self.grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                if (an->requires_grad)
                    kernels::axpy(1, dy + r * (ca + cb), an->grad_data() + r * ca, ca);
                if (bn->requires_grad)
                    kernels::axpy(1, dy + r * (ca + cb) + ca, bn->grad_data() + r * cb, cb);
            }
        },
        "concat_lastdim");
}

Tensor embedding_row(const Tensor& table, int64_t index) {
    if (table.rank() != 2) throw DimensionError("embedding_row: table must be rank 2");
    const int64_t rows = table.extent(0), d = table.extent(1);
    if (index < 0 || index >= rows)
        throw ConfigError("embedding_row: index " + std::to_string(index) + " out of " +
                          std::to_string(rows) + " rows");
    auto out = make_node({1, d});
    kernels::copy(table.data() + index * d, out->data.data(), d);
    auto tn = table.node();
    return finish(
        out, {table},
        [tn, index, d](Node& self) {
            if (tn->requires_grad)
                kernels::axpy(1, self.grad.data(), tn->grad_data() + index * d, d);
        },
        "embedding_row");
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& x) {
    auto out = make_node({1});
    out->data[0] = kernels::sum(x.data(), x.numel());
    auto xn = x.node();
    return finish(
        out, {x},
        [xn](Node& self) {
            if (!xn->requires_grad) return;
            real* g = xn->grad_data();
            const real d = self.grad[0];
            for (int64_t i = 0; i < xn->numel(); ++i) g[i] += d;
        },
        "sum_all");
}

Tensor mean_all(const Tensor& x) {
    auto out = make_node({1});
    out->data[0] = kernels::sum(x.data(), x.numel()) / static_cast<real>(x.numel());
    auto xn = x.node();
    return finish(
        out, {x},
        [xn](Node& self) {
            if (!xn->requires_grad) return;
            real* g = xn->grad_data();
            const real d = self.grad[0] / static_cast<real>(xn->numel());
            for (int64_t i = 0; i < xn->numel(); ++i) g[i] += d;
        },
        "mean_all");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("mse_loss: " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    const int64_t n = pred.numel();
    auto out = make_node({1});
    real acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const real d = pred.data()[i] - target.data()[i];
        acc += d * d;
    }
    out->data[0] = acc / static_cast<real>(n);
    auto pn = pred.node(), tn = target.node();
    return finish(
        out, {pred, target},
        [pn, tn, n](Node& self) {
            const real c = real(2) * self.grad[0] / static_cast<real>(n);
            if (pn->requires_grad) {
                real* g = pn->grad_data();
                for (int64_t i = 0; i < n; ++i) g[i] += c * (pn->data[i] - tn->data[i]);
            }
            if (tn->requires_grad) {
                real* g = tn->grad_data();
                for (int64_t i = 0; i < n; ++i) g[i] -= c * (pn->data[i] - tn->data[i]);
            }
        },
        "mse_loss");
}

}  // namespace stylepipe
