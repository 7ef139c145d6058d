#pragma once

#include <vector>

#include "tileattn/types.hpp"

namespace tileattn {

// Double-precision oracle output. row_sums holds the softmax normalizer
// (sum of exp(score - rowmax) over admitted keys) per (b,h,i); 0 for rows
// with no admitted key.
struct RefOutput {
  Shape shape;
  std::vector<double> o;         // [B,H,S,D]
  std::vector<double> row_sums;  // [B,H,S]

  const double* o_row(int64_t bh, int64_t s) const {
    return o.data() + (bh * shape.s + s) * shape.d;
  }
};

// Materializes the full S x S score matrix per (b,h) in double precision,
// applies the additive mask, row-softmax with max subtraction, then
// multiplies by V. Rows with every score masked produce exact zeros.
RefOutput sdpa_reference(const AttnInput& input, const MaskSpec& mask,
                         const ScaleSpec& scale);

// Unfused single-precision baseline: same algorithm as sdpa_reference but
// computed in f32 with full score materialization. Exists to be correct and
// representative of eager attention, not fast. For emulated 16-bit dtypes
// the output is snapped back to the storage grid.
std::vector<float> sdpa_eager_baseline(const AttnInput& input,
                                       const MaskSpec& mask,
                                       const ScaleSpec& scale);

}  // namespace tileattn
