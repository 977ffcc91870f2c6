#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rffi/tensornet/tensor.hpp"

namespace rffi::tn {

/// While alive, folds every piecewise branch taken on this thread (ReLU
/// signs, max-pool winners) into a digest. Two forward passes with equal
/// digests lie on the same smooth piece.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;
  void reset() { digest_ = 0; }
  std::uint64_t digest() const { return digest_; }
  static void record(std::uint64_t value);

 private:
  std::uint64_t digest_ = 0;
  BranchTrace* previous_;
};

// Element-wise ops require identical shapes.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// x[..., n] + b[n] broadcast over the leading axes.
template <class T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> tanh(const Tensor<T>& x);

/// a[m,k] * b[k,n].
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a[m,k] * b[n,k]^T.
template <class T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> transpose(const Tensor<T>& a);
template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <class T> Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end);
template <class T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end);
/// Concatenates [m, n_i] matrices along columns.
template <class T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
/// Stacks [1, n] (or [n]) rows into [k, n].
template <class T> Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows);

/// Row-wise softmax of a [m, n] matrix.
template <class T> Tensor<T> softmax_rows(const Tensor<T>& x);

/// y = x A^T + b over the last axis of x; A is [out, in]. A mismatched last
/// extent raises DimensionMismatch naming the layer.
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias, const std::string& name = "dense");

/// Same-padded stride-1 convolution. x [H, W, Cin], kernel [kh, kw, Cin, Cout]
/// with odd kh, kw; bias [Cout] may be undefined.
template <class T> Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

/// 2x2 stride-2 max pooling of [H, W, C]; H and W must be even. Ties route
/// the gradient to the first element of the window in row-major order.
template <class T> Tensor<T> max_pool2d(const Tensor<T>& x);

/// [H, W, C] -> [C].
template <class T> Tensor<T> global_avg_pool2d(const Tensor<T>& x);
/// [T, F] -> [F].
template <class T> Tensor<T> global_avg_pool1d(const Tensor<T>& x);

/// Per-row normalisation of [T, d] with gain/shift [d].
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, T eps = T(1e-5));

template <class T> Tensor<T> sum(const Tensor<T>& x);
/// sum_i x_i * w_i with constant weights; handy as a scalar probe.
template <class T> Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights);

template <class T>
struct CrossEntropy {
  Tensor<T> loss;
  std::vector<T> probabilities;
};

/// Numerically stable softmax + negative log-likelihood of `label`.
template <class T> CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label);

/// Softmax of a logit vector without building a graph.
template <class T> std::vector<T> softmax(std::span<const T> logits);

}  // namespace rffi::tn
