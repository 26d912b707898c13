// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace phydiff::ad {

// Reverse-mode autodiff over dense double tensors. Graphs are rebuilt per
// evaluation; parameter leaves persist across steps. Gradients live in an
// external table so independent evaluations sharing the same parameter
// leaves can run concurrently.

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class GradTable;
struct Node;
class Tensor;

using BackwardFn = std::function<void(const std::vector<double>& gout, GradTable&)>;

struct Node {
    Shape shape;
    std::vector<double> val;
    bool requires_grad = false;
    std::vector<Tensor> parents;  // keeps the upstream graph alive
    BackwardFn backward;          // adds d(root)/d(parent) contributions
};

/// Value-semantics handle to a graph node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(n_->val.size()); }
    bool requires_grad() const { return n_ && n_->requires_grad; }

    std::vector<double>& values() { return n_->val; }
    const std::vector<double>& values() const { return n_->val; }
    double item() const;

    Node* node() const { return n_.get(); }

private:
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
    std::shared_ptr<Node> n_;
    friend Tensor make_node(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);
};

/// Gradient accumulator keyed by node identity.
class GradTable {
public:
    std::vector<double>& acc(const Node* n);
    const std::vector<double>* find(const Node* n) const;
    std::vector<double> take(const Tensor& t);

private:
    std::unordered_map<const Node*, std::vector<double>> grads_;
};

/// Backpropagates from a scalar root; returns gradients for every
/// reachable requires-grad node (parameters included).
GradTable backward(const Tensor& root);

/// Disables graph recording in the current thread (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// ---- elementwise and reduction ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// ---- matrix ops (shapes {rows, cols}) ----
Tensor matmul(const Tensor& a, const Tensor& b);
/// x {N, D} plus/times a {D} or {1, D} vector broadcast over rows.
Tensor add_rows(const Tensor& x, const Tensor& v);
Tensor scale_rows(const Tensor& x, const Tensor& v);
/// Row-wise standardization over the last dimension (no learned affine).
Tensor layer_norm(const Tensor& x, double eps = 1e-6);

// ---- structural ops ----
Tensor reshape(const Tensor& x, Shape new_shape);
/// out[i] = x[idx[i]]; backward scatter-adds. idx entries must be valid.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<std::int64_t>> idx,
              Shape out_shape);
Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t len);

// ---- attention ----
/// Multi-head neighborhood attention over a gh x gw token grid.
/// q, k, v: {gh*gw, heads*head_dim}. Each query attends to the
/// window x window neighborhood centered on it, shifted inward at borders
/// so every query sees exactly min(window, gh) * min(window, gw) keys.
/// A window >= max(gh, gw)*2 degenerates to global attention.
Tensor na_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t gh,
                    std::int64_t gw, std::int64_t window, std::int64_t heads);

// ---- convolution (adapter blocks) ----
/// x {Cin, H, W}, w {Cout, Cin, kh, kw}, optional bias {Cout}; zero padding
/// keeps the spatial size when pad = k/2.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::int64_t pad);
Tensor avgpool2(const Tensor& x);

} // namespace phydiff::ad
