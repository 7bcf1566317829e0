#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ppap/tensor.hpp"

namespace ppap {

/// One node of the reverse-mode tape. Graphs are built forward by the op
/// functions below; backward() replays them in reverse topological order.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Tensor& grad_ref() {
        if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

/// Value-semantics handle to a tape node.
class Var {
public:
    Var() = default;
    Var(Tensor value, bool requires_grad)
        : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var constant(Tensor v) { return Var(std::move(v), false); }
    static Var param(Tensor v) { return Var(std::move(v), true); }

    bool defined() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    Tensor& val_mut() { return node_->value; }  // leaf updates (optimizer, FD probes)
    const Tensor& grad() const { return node_->grad_ref(); }
    void clear_grad() { node_->grad = Tensor(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Seeds d(root)/d(root)=1 and accumulates gradients into every reachable
/// node with requires_grad. root must be scalar (shape {1}).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);
Var square(const Var& a);
Var exp_op(const Var& a);
Var log_op(const Var& a);
Var gelu(const Var& a);
Var softplus(const Var& a);
Var clamp_min(const Var& a, double floor);
/// a * s where s has shape {1}
Var mul_scalar_var(const Var& a, const Var& s);

// ---- linear algebra (2-D) ----
Var matmul(const Var& a, const Var& b);      // (n,k)x(k,m) -> (n,m)
Var matmul_nt(const Var& a, const Var& b);   // (n,k)x(m,k)^T -> (n,m)
Var transpose(const Var& a);
Var add_rowvec(const Var& m, const Var& v);  // (n,c) + (c)

// ---- reductions ----
Var sum(const Var& a);            // -> {1}
Var mean(const Var& a);           // -> {1}
Var sum_cols(const Var& a);       // (n,c) -> (n,1)
Var mean_over_rows(const Var& a); // (n,c) -> (1,c)
Var mean_diag(const Var& a);      // (n,n) -> {1}

// ---- rows / shape ----
Var reshape(const Var& a, std::vector<int> shape);
Var slice_rows(const Var& a, int r0, int r1);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(const Var& a, std::vector<int> rows);
/// (k*g, c) -> (k, c), mean over each group of g consecutive rows
Var mean_group_rows(const Var& a, int k, int g);

// ---- normalization / attention primitives ----
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// rows scaled to unit L2 norm; throws if a row norm falls below min_norm
Var l2_normalize_rows(const Var& x, double min_norm = 1e-12);
/// rows scaled by 1/sqrt(|row|^2 + eps^2); degenerate rows map to ~zero
/// instead of throwing, regular rows are unit within eps^2/|row|^2
Var l2_normalize_rows_stable(const Var& x, double eps = 1e-8);

// ---- spatial ops on {C,H,W} ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var resize_bilinear(const Var& x, int out_h, int out_w);
Tensor resize_bilinear_tensor(const Tensor& x, int out_h, int out_w);
/// grid is (H*W, C); samples bilinearly at (gx, gy) in cell units, border-clamped
Var grid_sample_rows(const Var& grid, int h, int w, const std::vector<std::pair<double, double>>& pts);

/// masked MSE over the channels with weight > 0, mean over those channels and
/// all pixels; 0 when no channel is visible
Var masked_mse(const Var& pred, const Tensor& target, const Tensor& weights);

/// per-group 1x1 mixing: out[k,:] = sum_n w[k,n]*stack[n][k,:] + b[k]
Var grouped_mix(const std::vector<Var>& stack, const Var& w, const Var& b);

}  // namespace ppap
