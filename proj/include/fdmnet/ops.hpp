#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fdmnet/tensor.hpp"

namespace fdmnet {

// Binary elementwise ops accept equal shapes, a single-element `b`, or a `b`
// whose last axis is 1 and which is broadcast along the last axis of `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor log1p(const Tensor& a);
// log(max(a, floor)); the gradient is zero where the clamp is active.
Tensor log_clamped(const Tensor& a, double floor = 1e-12);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Rows (entries along axis 0) at the given indices; duplicates allowed.
Tensor index_select(const Tensor& a, std::span<const std::size_t> rows);
// Mean of the rows of a [n,d] matrix sharing a group label -> [groups,d].
Tensor group_mean(const Tensor& a, std::span<const std::size_t> group, std::size_t groups);
// a[i, index[i]] for a [n,k] matrix -> [n].
Tensor pick(const Tensor& a, std::span<const std::size_t> index);
// Euclidean norm of each row of a [n,d] matrix -> [n]. Zero rows get a zero gradient.
Tensor row_norm(const Tensor& a);
Tensor l2_normalize(const Tensor& a, double eps = 1e-12);

// x [n,in] * weight [in,out] + bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);

// Same-padded cross-correlation, stride 1. Input [h,w,cin] or [n,h,w,cin],
// kernel [k,k,cin,cout] with k in {1,3}, bias [cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);
// 2x2 mean pooling with stride 2 on [n,h,w,c]; odd trailing rows/cols drop.
Tensor avg_pool2x2(const Tensor& input);

// Reductions over the last (channel) axis, keeping it with size 1.
Tensor channel_avg_pool(const Tensor& input);
// Ties route the gradient to the lowest channel index.
Tensor channel_max_pool(const Tensor& input);
// Mean over the spatial axes: [h,w,c] -> [c], [n,h,w,c] -> [n,c].
Tensor spatial_global_avg_pool(const Tensor& input);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
};

// Per-channel normalization over every axis but the last. Training mode uses
// batch statistics (and updates `stats` when given); eval mode uses `stats`.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats* stats, bool training, double eps = 1e-5);

// Per-channel normalization over the spatial axes of each instance, no affine.
Tensor instance_norm(const Tensor& input, double eps = 1e-5);

}  // namespace fdmnet
