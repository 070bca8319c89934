#pragma once

#include <cstdint>
#include <vector>

#include "tgv/tensor.hpp"

namespace tgv {

/// Elementwise sum; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise (Hadamard) product; shapes must match exactly.
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply every element by a constant.
Tensor scale(const Tensor& a, double c);

/// Batched matrix product a[.., m, k] x b[.., k, n] -> [.., m, n].
/// Leading (batch) extents broadcast under the usual right-aligned rules.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Numerically stable softmax along `axis` (negative axes count from the
/// back). Each fiber sums to 1.
Tensor softmax(const Tensor& x, int64_t axis);

/// Per-token normalization over the last axis followed by the affine
/// (gain, bias), both of shape [d] where d is the last extent of x.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Elementwise logistic function, computed on the stable branch per sign.
Tensor sigmoid(const Tensor& x);

/// Rotary position embedding over the last axis (must be even), rotating
/// feature pair i of the token at sequence position p (second-to-last axis)
/// by angle p * base^(-2i/d). Default positions are 0..seq-1.
Tensor rope_apply(const Tensor& x, double base = 10000.0);
Tensor rope_apply(const Tensor& x, const std::vector<int64_t>& positions,
                  double base = 10000.0);

/// Concatenate along `axis`; all other extents must match.
Tensor concat(const Tensor& a, const Tensor& b, int64_t axis);

/// Feature-axis concatenation [.., d1] ++ [.., d2] -> [.., d1+d2].
Tensor concat_last(const Tensor& a, const Tensor& b);

/// Same data, new shape (element count preserved).
Tensor reshape(const Tensor& x, Shape shape);

/// Axis permutation; materializes a contiguous result.
Tensor permute(const Tensor& x, const std::vector<int64_t>& perm);

/// Column means of a rank-2 tensor: [n, d] -> [d].
Tensor mean_rows(const Tensor& x);

/// Sum of all elements as a rank-0 scalar.
Tensor sum_all(const Tensor& x);

/// Cross-entropy of a rank-1 logit vector against an integer class label,
/// computed via a stable log-sum-exp. Returns a rank-0 scalar.
Tensor cross_entropy_logits(const Tensor& logits, int64_t label);

}  // namespace tgv
