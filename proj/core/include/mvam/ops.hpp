#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "mvam/tensor.hpp"

namespace mvam {

enum class Activation { kIdentity, kTanh, kRelu };

// Row-major boolean mask; nonzero = keep.
using Mask = std::span<const std::uint8_t>;

// Reduction order. kSorted adds terms in ascending order of value, which
// makes the result independent of the order the operands arrive in.
enum class Summation { kIndexOrder, kSorted };

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b,
              Summation summation = Summation::kIndexOrder);
Tensor transpose(const Tensor& a);

// Elementwise; shapes must match exactly unless one side is a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// [r x c] + [c] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
// Always strictly inside (0, 1), also for saturated inputs.
Tensor sigmoid(const Tensor& x);
Tensor activate(const Tensor& x, Activation kind);

// Inverted dropout: entries are zeroed with probability p and survivors are
// scaled by 1/(1-p). Identity when !train or p == 0. The mask is a pure
// function of `seed`.
Tensor dropout(const Tensor& x, double p, std::uint64_t seed, bool train);

// Row softmax after subtracting the row max. Masked entries are exactly 0;
// `mask`, when given, has r*c entries, or c entries shared by every row.
Tensor softmax_rows(const Tensor& x, std::optional<Mask> mask = std::nullopt,
                    Summation summation = Summation::kIndexOrder);

// Per-row standardisation over the c features, then gain/bias.
Tensor layer_normalize(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps);
// Per-column standardisation over the r rows (batch statistics).
Tensor batch_normalize(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps);

// Same-length 1-D convolution. `input` is [d_in x N] (one column per
// position), `kernel` is [k x d_in x d_out], `bias` is [d_out]. Zero padding
// of floor((k-1)/2) on the left and ceil((k-1)/2) on the right, so output
// column i sees input columns i - left ... i - left + k - 1.
Tensor conv1d_same(const Tensor& input, const Tensor& kernel,
                   const Tensor& bias, Activation activation);

// Gathers rows of `table` [V x d] into [d x N] columns. Entries equal to
// `pad_id` produce zero columns and receive no gradient.
Tensor embedding_columns(const Tensor& table, std::span<const std::int32_t> ids,
                         std::int32_t pad_id);

Tensor sum(const Tensor& x);
// [r x c] -> [r]
Tensor sum_rows(const Tensor& x);
// n tensors of c elements each -> [n x c]
Tensor stack_rows(std::span<const Tensor> rows);

// -sum_l [y log p + (1-y) log(1-p)] per row, averaged over rows. `p` and
// `truth` are both [rows x labels]; p is clamped to [clamp, 1-clamp] inside
// the logarithms.
Tensor binary_cross_entropy(const Tensor& p, const Tensor& truth,
                            double clamp = 1e-12);

}  // namespace mvam
