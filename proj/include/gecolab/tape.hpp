// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gecolab/tensor.hpp"

namespace gecolab::ad {

class Tape;

// Handle into a tape. Cheap to copy; lifetime bounded by the tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int idx) : tape_(tape), idx_(idx) {}

    const Tensor& val() const;
    const std::vector<int>& shape() const { return val().shape(); }
    bool defined() const { return tape_ != nullptr; }
    int index() const { return idx_; }
    Tape* tape() const { return tape_; }

private:
    Tape* tape_ = nullptr;
    int idx_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is already
// a topological order, so backward() is a single reverse sweep.
class Tape {
public:
    struct Node {
        Tensor val;
        Tensor grad;  // allocated on first accumulation
        bool requires_grad = false;
        bool has_grad = false;
        std::function<void(Tape&, int)> backward;  // pushes grad into parents
    };

    Var constant(Tensor v) { return push(std::move(v), false, nullptr); }
    Var leaf(Tensor v) { return push(std::move(v), true, nullptr); }

    Var push(Tensor v, bool requires_grad, std::function<void(Tape&, int)> bw) {
        Node n;
        n.val = std::move(v);
        n.requires_grad = requires_grad;
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    const Tensor& val(int idx) const { return nodes_[static_cast<size_t>(idx)].val; }
    Node& node(int idx) { return nodes_[static_cast<size_t>(idx)]; }
    bool requires_grad(int idx) const { return nodes_[static_cast<size_t>(idx)].requires_grad; }

    // Gradient buffer of a node, zero-initialized on first touch.
    Tensor& grad_buffer(int idx) {
        Node& n = nodes_[static_cast<size_t>(idx)];
        if (!n.has_grad) {
            n.grad = Tensor(n.val.shape());
            n.has_grad = true;
        }
        return n.grad;
    }
    bool has_grad(int idx) const { return nodes_[static_cast<size_t>(idx)].has_grad; }

    // Runs reverse sweep from a scalar loss. Seeds dL/dL = 1.
    void backward(const Var& loss);

    // Gradient of a var after backward(); zero tensor if the var was never reached.
    Tensor grad(const Var& v) const {
        const Node& n = nodes_[static_cast<size_t>(v.index())];
        return n.has_grad ? n.grad : Tensor(n.val.shape());
    }

    size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape_->val(idx_); }

// ---- elementwise / structural ops -------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                    // hadamard
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_const(Var a, const Tensor& c);
Var mul_const(Var a, const Tensor& c);    // hadamard with constant
Var neg(Var a);

Var silu(Var a);
Var sigmoid(Var a);
Var tanh_op(Var a);
Var softplus(Var a);
Var exp_clamped(Var a, double lo, double hi);  // exp(clamp(a, lo, hi))
Var square(Var a);

// Identity on |x| <= knee, tanh tail saturating to +-1 beyond. C1-smooth.
Var soft_clamp_unit(Var a, double knee = 0.95);

Var sum_all(Var a);                       // -> [1]
Var mean_all(Var a);                      // -> [1]
Var dot_const(Var a, const Tensor& c);    // -> [1]
Var mse_const(Var a, const Tensor& target);  // mean((a-t)^2) -> [1]

Var reshape(Var a, std::vector<int> shape);
Var slice_cols(Var a, int c0, int c1);               // 2-d, columns [c0,c1)
Var concat_cols(const std::vector<Var>& parts);      // 2-d, along dim 1
Var concat_rows(const std::vector<Var>& parts);      // along dim 0, equal trailing dims
Var slice_rows(Var a, int r0, int r1);               // leading dim rows [r0,r1)
Var rows_scale(Var v, const Tensor& m);              // [N,1] x const [N,K] -> [N,K]
Var concat_ch(Var a, Var b);                         // [N,Ca,H,W]+[N,Cb,H,W]
Var broadcast_concat_ch(Var x, Var c);               // [V,C,H,W] + [Cc,H,W] per view
Var slice_ch(Var x, int c0, int c1);                 // channels [c0,c1)
Var add_channel_bias(Var x, Var b);                  // [N,C,H,W] + [C]
Var add_view_bias(Var x, Var e);                     // [V,C,H,W] + [V,C]

// ---- finite-difference harness (tests + internal verification) --------

// Central finite difference of f() w.r.t. entries of `param`. f must re-read
// `param` on every call. Used by gradient-correctness suites.
Tensor finite_difference(Tensor& param, const std::function<double()>& f, double h);

} // namespace gecolab::ad
