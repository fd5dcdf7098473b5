#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "focalforge/tensor.hpp"

namespace focalforge::ag {

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Ops build fresh nodes each forward
/// pass; parameters are long-lived leaves whose grads accumulate until the
/// optimizer clears them.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Tensor(value.shape());
    }
};

Var constant(Tensor v);
Var param(Tensor v);

/// Reverse pass from a scalar root; accumulates into leaf grads.
void backward(const Var& root);

double scalar(const Var& x);

// ---- arithmetic -------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var exp_(const Var& a);

// ---- shape ------------------------------------------------------------
Var reshape(const Var& x, std::vector<int> shape);
Var permute(const Var& x, const std::vector<int>& perm);
Var concat_channels(const Var& a, const Var& b);   // NCHW, along C
Var slice_channels(const Var& x, int c0, int c1);  // NCHW, [c0, c1)
Var pad_hw(const Var& x, int pad_h, int pad_w);    // zero pad bottom/right
Var crop_hw(const Var& x, int out_h, int out_w);   // top-left crop

// ---- linear algebra ----------------------------------------------------
Var matmul(const Var& a, const Var& b);  // [M,K]x[K,N]
/// Batched matmul. With sorted_inner the K-axis accumulation is performed in
/// ascending value order, making the result invariant to any permutation of
/// the K slices (used where K is the stack-layer axis).
Var bmm(const Var& a, const Var& b, bool sorted_inner = false);
Var linear(const Var& x, const Var& w, const Var& b);  // x[N,Ci] w[Co,Ci] b[Co]

// ---- conv / resampling (NCHW) ------------------------------------------
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var avg_pool2d(const Var& x, int k);
Var bilinear_upsample(const Var& x, int out_h, int out_w);

// ---- activations --------------------------------------------------------
Var relu(const Var& x);
Var silu(const Var& x);
Var sigmoid(const Var& x);

// ---- normalization -------------------------------------------------------
Var layer_norm_lastdim(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- bias helpers ---------------------------------------------------------
Var add_bias_nchw(const Var& x, const Var& bias);        // bias [C]
Var add_rowbias_nchw(const Var& x, const Var& rowbias);  // rowbias [N,C]

// ---- softmax / losses ------------------------------------------------------
/// Softmax over the last axis with order-invariant denominator accumulation.
Var softmax_lastdim(const Var& x);
Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets);
/// fused[c,p] = sum_l probs[p,l] * layers[l,c,p], accumulated order-invariantly
/// over l. probs: [P,L]; layers: constant [L,C,H,W]; result [C,H,W].
Var weighted_layer_sum(const Var& probs, const Var& layers);
Var mean_all(const Var& x);
Var sum_all(const Var& x);
Var l1_loss(const Var& a, const Var& b);
Var mse_loss(const Var& a, const Var& b);

/// Sum of a small buffer in ascending value order (permutation-invariant).
double sorted_sum(double* buf, int n);

}  // namespace focalforge::ag
