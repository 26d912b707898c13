// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "phydiff/errors.hpp"

namespace phydiff::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap map(const std::vector<double>& v, std::int64_t r, std::int64_t c) {
    return ConstMap(v.data(), r, c);
}
MutMap map(std::vector<double>& v, std::int64_t r, std::int64_t c) {
    return MutMap(v.data(), r, c);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }
double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

} // namespace

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

Tensor make_node(Shape shape, std::vector<double> val, std::vector<Tensor> parents,
                 BackwardFn backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    if (g_grad_enabled) {
        for (const Tensor& p : parents)
            if (p.requires_grad()) { n->requires_grad = true; break; }
    }
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val.assign(static_cast<std::size_t>(ad::numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (static_cast<std::int64_t>(values.size()) != ad::numel(shape))
        throw ShapeError("Tensor::from: value count does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("Tensor::item: tensor is not scalar");
    return n_->val[0];
}

std::vector<double>& GradTable::acc(const Node* n) {
    auto it = grads_.find(n);
    if (it == grads_.end())
        it = grads_.emplace(n, std::vector<double>(n->val.size(), 0.0)).first;
    return it->second;
}

const std::vector<double>* GradTable::find(const Node* n) const {
    auto it = grads_.find(n);
    return it == grads_.end() ? nullptr : &it->second;
}

std::vector<double> GradTable::take(const Tensor& t) {
    auto it = grads_.find(t.node());
    if (it == grads_.end()) return std::vector<double>(t.values().size(), 0.0);
    std::vector<double> out = std::move(it->second);
    grads_.erase(it);
    return out;
}

GradTable backward(const Tensor& root) {
    if (root.numel() != 1) throw ShapeError("ad::backward: root must be scalar");
    GradTable table;
    if (!root.requires_grad()) return table;

    // Post-order DFS; reversed, it yields every node before its parents.
    std::vector<Node*> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Node*, bool>> stack;
    stack.emplace_back(root.node(), false);
    while (!stack.empty()) {
        auto [n, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order.push_back(n);
            continue;
        }
        if (visited.count(n)) continue;
        visited.insert(n);
        stack.emplace_back(n, true);
        for (const Tensor& p : n->parents)
            if (p.requires_grad() && !visited.count(p.node())) stack.emplace_back(p.node(), false);
    }

    table.acc(root.node())[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        const std::vector<double>* g = table.find(n);
        if (!g || !n->backward) continue;
        n->backward(*g, table);
    }
    return table;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    Tensor t = make_node(a.shape(), std::move(out), {a, b}, nullptr);
    if (t.requires_grad()) {
        Node *pa = a.node(), *pb = b.node();
        t.node()->backward = [pa, pb](const std::vector<double>& g, GradTable& gt) {
            if (pa->requires_grad) {
                auto& ga = gt.acc(pa);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (pb->requires_grad) {
                auto& gb = gt.acc(pb);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    }
    return t;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    Tensor t = make_node(a.shape(), std::move(out), {a, b}, nullptr);
    if (t.requires_grad()) {
        Node *pa = a.node(), *pb = b.node();
        t.node()->backward = [pa, pb](const std::vector<double>& g, GradTable& gt) {
            if (pa->requires_grad) {
                auto& ga = gt.acc(pa);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (pb->requires_grad) {
                auto& gb = gt.acc(pb);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        };
    }
    return t;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    Tensor t = make_node(a.shape(), std::move(out), {a, b}, nullptr);
    if (t.requires_grad()) {
        Node *pa = a.node(), *pb = b.node();
        t.node()->backward = [pa, pb](const std::vector<double>& g, GradTable& gt) {
            if (pa->requires_grad) {
                auto& ga = gt.acc(pa);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb->val[i];
            }
            if (pb->requires_grad) {
                auto& gb = gt.acc(pb);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa->val[i];
            }
        };
    }
    return t;
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + s;
    Tensor t = make_node(a.shape(), std::move(out), {a}, nullptr);
    if (t.requires_grad()) {
        Node* pa = a.node();
        t.node()->backward = [pa](const std::vector<double>& g, GradTable& gt) {
            auto& ga = gt.acc(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return t;
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    Tensor t = make_node(a.shape(), std::move(out), {a}, nullptr);
    if (t.requires_grad()) {
        Node* pa = a.node();
        t.node()->backward = [pa, s](const std::vector<double>& g, GradTable& gt) {
            auto& ga = gt.acc(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        };
    }
    return t;
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * norm_cdf(x.values()[i]);
    Tensor t = make_node(x.shape(), std::move(out), {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        t.node()->backward = [px](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = px->val[i];
                gx[i] += g[i] * (norm_cdf(v) + v * norm_pdf(v));
            }
        };
    }
    return t;
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.values()[i]);
    Tensor t = make_node(x.shape(), std::move(out), {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        t.node()->backward = [px](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (px->val[i] > 0.0) gx[i] += g[i];
        };
    }
    return t;
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor t = make_node({1}, {s}, {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        t.node()->backward = [px](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (double& v : gx) v += g[0];
        };
    }
    return t;
}

Tensor mean(const Tensor& x) {
    return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return mean(mul(d, d));
}

// ------------------------------------------------------------------- matrices

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const std::int64_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(M * N));
    map(out, M, N).noalias() = map(a.values(), M, K) * map(b.values(), K, N);
    Tensor t = make_node({M, N}, std::move(out), {a, b}, nullptr);
    if (t.requires_grad()) {
        Node *pa = a.node(), *pb = b.node();
        t.node()->backward = [pa, pb, M, K, N](const std::vector<double>& g, GradTable& gt) {
            if (pa->requires_grad)
                map(gt.acc(pa), M, K).noalias() +=
                    ConstMap(g.data(), M, N) * map(pb->val, K, N).transpose();
            if (pb->requires_grad)
                map(gt.acc(pb), K, N).noalias() +=
                    map(pa->val, M, K).transpose() * ConstMap(g.data(), M, N);
        };
    }
    return t;
}

namespace {

void check_row_broadcast(const Tensor& x, const Tensor& v, const char* op) {
    if (x.shape().size() != 2)
        throw ShapeError(std::string(op) + ": expected 2D input, got " + shape_str(x.shape()));
    if (v.numel() != x.shape()[1])
        throw ShapeError(std::string(op) + ": vector length " + std::to_string(v.numel()) +
                         " does not match column count " + std::to_string(x.shape()[1]));
}

} // namespace

Tensor add_rows(const Tensor& x, const Tensor& v) {
    check_row_broadcast(x, v, "add_rows");
    const std::int64_t N = x.shape()[0], D = x.shape()[1];
    std::vector<double> out(x.values().size());
    for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t j = 0; j < D; ++j) out[i * D + j] = x.values()[i * D + j] + v.values()[j];
    Tensor t = make_node(x.shape(), std::move(out), {x, v}, nullptr);
    if (t.requires_grad()) {
        Node *px = x.node(), *pv = v.node();
        t.node()->backward = [px, pv, N, D](const std::vector<double>& g, GradTable& gt) {
            if (px->requires_grad) {
                auto& gx = gt.acc(px);
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (pv->requires_grad) {
                auto& gv = gt.acc(pv);
                for (std::int64_t i = 0; i < N; ++i)
                    for (std::int64_t j = 0; j < D; ++j) gv[j] += g[i * D + j];
            }
        };
    }
    return t;
}

Tensor scale_rows(const Tensor& x, const Tensor& v) {
    check_row_broadcast(x, v, "scale_rows");
    const std::int64_t N = x.shape()[0], D = x.shape()[1];
    std::vector<double> out(x.values().size());
    for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t j = 0; j < D; ++j) out[i * D + j] = x.values()[i * D + j] * v.values()[j];
    Tensor t = make_node(x.shape(), std::move(out), {x, v}, nullptr);
    if (t.requires_grad()) {
        Node *px = x.node(), *pv = v.node();
        t.node()->backward = [px, pv, N, D](const std::vector<double>& g, GradTable& gt) {
            if (px->requires_grad) {
                auto& gx = gt.acc(px);
                for (std::int64_t i = 0; i < N; ++i)
                    for (std::int64_t j = 0; j < D; ++j) gx[i * D + j] += g[i * D + j] * pv->val[j];
            }
            if (pv->requires_grad) {
                auto& gv = gt.acc(pv);
                for (std::int64_t i = 0; i < N; ++i)
                    for (std::int64_t j = 0; j < D; ++j) gv[j] += g[i * D + j] * px->val[i * D + j];
            }
        };
    }
    return t;
}

Tensor layer_norm(const Tensor& x, double eps) {
    if (x.shape().size() != 2) throw ShapeError("layer_norm: expected 2D input");
    const std::int64_t N = x.shape()[0], D = x.shape()[1];
    std::vector<double> out(x.values().size());
    std::vector<double> inv_sd(static_cast<std::size_t>(N));
    for (std::int64_t i = 0; i < N; ++i) {
        const double* row = x.values().data() + i * D;
        double mu = 0.0;
        for (std::int64_t j = 0; j < D; ++j) mu += row[j];
        mu /= static_cast<double>(D);
        double var = 0.0;
        for (std::int64_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(D);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sd[i] = inv;
        for (std::int64_t j = 0; j < D; ++j) out[i * D + j] = (row[j] - mu) * inv;
    }
    Tensor t = make_node(x.shape(), std::move(out), {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        Node* self = t.node();
        t.node()->backward = [px, self, inv_sd = std::move(inv_sd), N,
                              D](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (std::int64_t i = 0; i < N; ++i) {
                const double* y = self->val.data() + i * D;
                const double* gr = g.data() + i * D;
                double g_mean = 0.0, gy_mean = 0.0;
                for (std::int64_t j = 0; j < D; ++j) {
                    g_mean += gr[j];
                    gy_mean += gr[j] * y[j];
                }
                g_mean /= static_cast<double>(D);
                gy_mean /= static_cast<double>(D);
                for (std::int64_t j = 0; j < D; ++j)
                    gx[i * D + j] += inv_sd[i] * (gr[j] - g_mean - y[j] * gy_mean);
            }
        };
    }
    return t;
}

// ----------------------------------------------------------------- structural

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (numel(new_shape) != x.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                         shape_str(new_shape));
    Tensor t = make_node(std::move(new_shape), x.values(), {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        t.node()->backward = [px](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
    }
    return t;
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::int64_t>> idx,
              Shape out_shape) {
    if (static_cast<std::int64_t>(idx->size()) != numel(out_shape))
        throw ShapeError("gather: index count does not match output shape");
    std::vector<double> out(idx->size());
    for (std::size_t i = 0; i < idx->size(); ++i) out[i] = x.values()[(*idx)[i]];
    Tensor t = make_node(std::move(out_shape), std::move(out), {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        t.node()->backward = [px, idx](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (std::size_t i = 0; i < g.size(); ++i) gx[(*idx)[i]] += g[i];
        };
    }
    return t;
}

Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len) {
    if (x.shape().size() != 2) throw ShapeError("slice_cols: expected 2D input");
    const std::int64_t N = x.shape()[0], D = x.shape()[1];
    if (start < 0 || len < 0 || start + len > D) throw ShapeError("slice_cols: range out of bounds");
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(N * len));
    for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t j = 0; j < len; ++j) idx->push_back(i * D + start + j);
    return gather(x, idx, {N, len});
}

// ------------------------------------------------------------------ attention

Tensor na_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t gh,
                    std::int64_t gw, std::int64_t window, std::int64_t heads) {
    check_same_shape(q, k, "na_attention(q,k)");
    check_same_shape(q, v, "na_attention(q,v)");
    if (q.shape().size() != 2 || q.shape()[0] != gh * gw)
        throw ShapeError("na_attention: token count does not match grid");
    const std::int64_t inner = q.shape()[1];
    if (heads < 1 || inner % heads != 0)
        throw ShapeError("na_attention: inner width not divisible by head count");
    if (window < 1) throw ValueError("na_attention: window must be >= 1");
    const std::int64_t dh = inner / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const std::int64_t kh = std::min(window, gh), kw = std::min(window, gw);
    const std::int64_t nkeys = kh * kw;
    const std::int64_t N = gh * gw;

    // Inward-shifted window origin: every query sees exactly kh*kw keys.
    // Captures by value; the backward closure outlives this stack frame.
    auto origin = [gh, gw, window, kh, kw](std::int64_t r, std::int64_t c) {
        const std::int64_t r0 = std::clamp(r - window / 2, std::int64_t(0), gh - kh);
        const std::int64_t c0 = std::clamp(c - window / 2, std::int64_t(0), gw - kw);
        return std::pair<std::int64_t, std::int64_t>(r0, c0);
    };

    std::vector<double> out(q.values().size(), 0.0);
    // Softmax probabilities cached for the backward pass: N x heads x nkeys.
    auto probs = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(N * heads * nkeys));

    const double* qv = q.values().data();
    const double* kv = k.values().data();
    const double* vv = v.values().data();
    std::vector<double> scores(static_cast<std::size_t>(nkeys));

    for (std::int64_t qi = 0; qi < N; ++qi) {
        const auto [r0, c0] = origin(qi / gw, qi % gw);
        for (std::int64_t h = 0; h < heads; ++h) {
            const double* qrow = qv + qi * inner + h * dh;
            double smax = -std::numeric_limits<double>::infinity();
            for (std::int64_t m = 0; m < nkeys; ++m) {
                const std::int64_t kj = (r0 + m / kw) * gw + (c0 + m % kw);
                const double* krow = kv + kj * inner + h * dh;
                double dot = 0.0;
                for (std::int64_t d = 0; d < dh; ++d) dot += qrow[d] * krow[d];
                scores[m] = dot * scale;
                smax = std::max(smax, scores[m]);
            }
            double denom = 0.0;
            double* p = probs->data() + (qi * heads + h) * nkeys;
            for (std::int64_t m = 0; m < nkeys; ++m) {
                p[m] = std::exp(scores[m] - smax);
                denom += p[m];
            }
            const double inv = 1.0 / denom;
            double* orow = out.data() + qi * inner + h * dh;
            for (std::int64_t m = 0; m < nkeys; ++m) {
                p[m] *= inv;
                const std::int64_t kj = (r0 + m / kw) * gw + (c0 + m % kw);
                const double* vrow = vv + kj * inner + h * dh;
                for (std::int64_t d = 0; d < dh; ++d) orow[d] += p[m] * vrow[d];
            }
        }
    }

    Tensor t = make_node(q.shape(), std::move(out), {q, k, v}, nullptr);
    if (t.requires_grad()) {
        Node *pq = q.node(), *pk = k.node(), *pv_ = v.node();
        t.node()->backward = [pq, pk, pv_, probs, gh, gw, heads, dh, inner, kw, nkeys, scale,
                              origin](const std::vector<double>& g, GradTable& gt) {
            auto& gq = gt.acc(pq);
            auto& gk = gt.acc(pk);
            auto& gv = gt.acc(pv_);
            const std::int64_t N = gh * gw;
            std::vector<double> dscore(static_cast<std::size_t>(nkeys));
            for (std::int64_t qi = 0; qi < N; ++qi) {
                const auto [r0, c0] = origin(qi / gw, qi % gw);
                for (std::int64_t h = 0; h < heads; ++h) {
                    const double* p = probs->data() + (qi * heads + h) * nkeys;
                    const double* grow = g.data() + qi * inner + h * dh;
                    double dot_pd = 0.0;
                    for (std::int64_t m = 0; m < nkeys; ++m) {
                        const std::int64_t kj = (r0 + m / kw) * gw + (c0 + m % kw);
                        const double* vrow = pv_->val.data() + kj * inner + h * dh;
                        double dp = 0.0;
                        for (std::int64_t d = 0; d < dh; ++d) {
                            dp += grow[d] * vrow[d];
                            gv[kj * inner + h * dh + d] += p[m] * grow[d];
                        }
                        dscore[m] = dp;
                        dot_pd += p[m] * dp;
                    }
                    const double* qrow = pq->val.data() + qi * inner + h * dh;
                    for (std::int64_t m = 0; m < nkeys; ++m) {
                        const double ds = p[m] * (dscore[m] - dot_pd) * scale;
                        const std::int64_t kj = (r0 + m / kw) * gw + (c0 + m % kw);
                        const double* krow = pk->val.data() + kj * inner + h * dh;
                        for (std::int64_t d = 0; d < dh; ++d) {
                            gq[qi * inner + h * dh + d] += ds * krow[d];
                            gk[kj * inner + h * dh + d] += ds * qrow[d];
                        }
                    }
                }
            }
        };
    }
    return t;
}

// ---------------------------------------------------------------- convolution

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::int64_t pad) {
    if (x.shape().size() != 3 || w.shape().size() != 4)
        throw ShapeError("conv2d: expected x {C,H,W} and w {Co,Ci,kh,kw}");
    const std::int64_t Ci = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    const std::int64_t Co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != Ci) throw ShapeError("conv2d: channel mismatch");
    if (bias.defined() && bias.numel() != Co) throw ShapeError("conv2d: bias size mismatch");
    const std::int64_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    if (Ho < 1 || Wo < 1) throw ShapeError("conv2d: kernel larger than padded input");

    const std::int64_t npix = Ho * Wo;
    const std::int64_t kdim = Ci * kh * kw;

    // im2col, cached for the backward pass.
    auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(npix * kdim), 0.0);
    for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
            double* crow = cols->data() + (oy * Wo + ox) * kdim;
            for (std::int64_t ci = 0; ci < Ci; ++ci)
                for (std::int64_t dy = 0; dy < kh; ++dy) {
                    const std::int64_t iy = oy + dy - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t dx = 0; dx < kw; ++dx) {
                        const std::int64_t ix = ox + dx - pad;
                        if (ix < 0 || ix >= W) continue;
                        crow[(ci * kh + dy) * kw + dx] = x.values()[(ci * H + iy) * W + ix];
                    }
                }
        }

    // Weights reshaped to (kdim, Co).
    std::vector<double> wmat(static_cast<std::size_t>(kdim * Co));
    for (std::int64_t co = 0; co < Co; ++co)
        for (std::int64_t kd = 0; kd < kdim; ++kd)
            wmat[kd * Co + co] = w.values()[co * kdim + kd];

    std::vector<double> outmat(static_cast<std::size_t>(npix * Co));
    map(outmat, npix, Co).noalias() = ConstMap(cols->data(), npix, kdim) * map(wmat, kdim, Co);

    std::vector<double> out(static_cast<std::size_t>(Co * npix));
    for (std::int64_t co = 0; co < Co; ++co) {
        const double b = bias.defined() ? bias.values()[co] : 0.0;
        for (std::int64_t p = 0; p < npix; ++p) out[co * npix + p] = outmat[p * Co + co] + b;
    }

    std::vector<Tensor> parents = {x, w};
    if (bias.defined()) parents.push_back(bias);
    Tensor t = make_node({Co, Ho, Wo}, std::move(out), std::move(parents), nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        Node* pw = w.node();
        Node* pb = bias.defined() ? bias.node() : nullptr;
        t.node()->backward = [px, pw, pb, cols, Ci, H, W, Co, kh, kw, Ho, Wo, npix, kdim,
                              pad](const std::vector<double>& g, GradTable& gt) {
            std::vector<double> gmat(static_cast<std::size_t>(npix * Co));
            for (std::int64_t co = 0; co < Co; ++co)
                for (std::int64_t p = 0; p < npix; ++p) gmat[p * Co + co] = g[co * npix + p];

            if (pb && pb->requires_grad) {
                auto& gb = gt.acc(pb);
                for (std::int64_t co = 0; co < Co; ++co)
                    for (std::int64_t p = 0; p < npix; ++p) gb[co] += gmat[p * Co + co];
            }
            if (pw->requires_grad) {
                std::vector<double> gwmat(static_cast<std::size_t>(kdim * Co));
                map(gwmat, kdim, Co).noalias() =
                    ConstMap(cols->data(), npix, kdim).transpose() * map(gmat, npix, Co);
                auto& gw = gt.acc(pw);
                for (std::int64_t co = 0; co < Co; ++co)
                    for (std::int64_t kd = 0; kd < kdim; ++kd)
                        gw[co * kdim + kd] += gwmat[kd * Co + co];
            }
            if (px->requires_grad) {
                std::vector<double> wmat(static_cast<std::size_t>(kdim * Co));
                for (std::int64_t co = 0; co < Co; ++co)
                    for (std::int64_t kd = 0; kd < kdim; ++kd)
                        wmat[kd * Co + co] = pw->val[co * kdim + kd];
                std::vector<double> gcols(static_cast<std::size_t>(npix * kdim));
                map(gcols, npix, kdim).noalias() =
                    map(gmat, npix, Co) * map(wmat, kdim, Co).transpose();
                auto& gx = gt.acc(px);
                for (std::int64_t oy = 0; oy < Ho; ++oy)
                    for (std::int64_t ox = 0; ox < Wo; ++ox) {
                        const double* crow = gcols.data() + (oy * Wo + ox) * kdim;
                        for (std::int64_t ci = 0; ci < Ci; ++ci)
                            for (std::int64_t dy = 0; dy < kh; ++dy) {
                                const std::int64_t iy = oy + dy - pad;
                                if (iy < 0 || iy >= H) continue;
                                for (std::int64_t dx = 0; dx < kw; ++dx) {
                                    const std::int64_t ix = ox + dx - pad;
                                    if (ix < 0 || ix >= W) continue;
                                    gx[(ci * H + iy) * W + ix] += crow[(ci * kh + dy) * kw + dx];
                                }
                            }
                    }
            }
        };
    }
    return t;
}

Tensor avgpool2(const Tensor& x) {
    if (x.shape().size() != 3) throw ShapeError("avgpool2: expected {C,H,W}");
    const std::int64_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    if (H % 2 != 0 || W % 2 != 0) throw ShapeError("avgpool2: odd spatial dims");
    const std::int64_t Ho = H / 2, Wo = W / 2;
    std::vector<double> out(static_cast<std::size_t>(C * Ho * Wo));
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < Ho; ++y)
            for (std::int64_t xx = 0; xx < Wo; ++xx) {
                const double* base = x.values().data() + (c * H + 2 * y) * W + 2 * xx;
                out[(c * Ho + y) * Wo + xx] = 0.25 * (base[0] + base[1] + base[W] + base[W + 1]);
            }
    Tensor t = make_node({C, Ho, Wo}, std::move(out), {x}, nullptr);
    if (t.requires_grad()) {
        Node* px = x.node();
        t.node()->backward = [px, C, H, W, Ho, Wo](const std::vector<double>& g, GradTable& gt) {
            auto& gx = gt.acc(px);
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t y = 0; y < Ho; ++y)
                    for (std::int64_t xx = 0; xx < Wo; ++xx) {
                        const double gv = 0.25 * g[(c * Ho + y) * Wo + xx];
                        double* base = gx.data() + (c * H + 2 * y) * W + 2 * xx;
                        base[0] += gv;
                        base[1] += gv;
                        base[W] += gv;
                        base[W + 1] += gv;
                    }
        };
    }
    return t;
}

} // namespace phydiff::ad
