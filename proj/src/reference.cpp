#include "tileattn/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace tileattn {

RefOutput sdpa_reference(const AttnInput& input, const MaskSpec& mask,
                         const ScaleSpec& scale) {
  const Shape& sh = input.shape;
  validate(sh);
  const int64_t S = sh.s, D = sh.d;
  const double sc = effective_scale(scale, D);

  RefOutput out;
  out.shape = sh;
  out.o.assign(size_t(sh.elems()), 0.0);
  out.row_sums.assign(size_t(sh.bh() * S), 0.0);

  std::vector<double> scores(static_cast<size_t>(S));
  for (int64_t bh = 0; bh < sh.bh(); ++bh) {
    const int64_t b = bh / sh.h;
    for (int64_t i = 0; i < S; ++i) {
      double row_max = kNegInf;
      for (int64_t j = 0; j < S; ++j) {
        double s_ij = kNegInf;
        if (mask.admits(b, i, j)) {
          const float* qi = input.q_row(bh, i);
          const float* kj = input.k_row(bh, j);
          double acc = 0.0;
          for (int64_t d = 0; d < D; ++d) acc += double(qi[d]) * double(kj[d]);
          s_ij = sc * acc;
        }
        scores[size_t(j)] = s_ij;
        if (s_ij > row_max) row_max = s_ij;
      }
      double* oi = out.o.data() + (bh * S + i) * D;
      if (row_max == kNegInf) continue;  // empty row: exact zeros
      double denom = 0.0;
      for (int64_t j = 0; j < S; ++j) {
        double w = std::exp(scores[size_t(j)] - row_max);
        scores[size_t(j)] = w;
        denom += w;
      }
      out.row_sums[size_t(bh * S + i)] = denom;
      for (int64_t j = 0; j < S; ++j) {
        const double w = scores[size_t(j)] / denom;
        if (w == 0.0) continue;
        const float* vj = input.v_row(bh, j);
        for (int64_t d = 0; d < D; ++d) oi[d] += w * double(vj[d]);
      }
    }
  }
  return out;
}

std::vector<float> sdpa_eager_baseline(const AttnInput& input,
                                       const MaskSpec& mask,
                                       const ScaleSpec& scale) {
  const Shape& sh = input.shape;
  validate(sh);
  const int64_t S = sh.s, D = sh.d;
  const float sc = float(effective_scale(scale, D));
  const float neg_inf = -std::numeric_limits<float>::infinity();

  std::vector<float> out(size_t(sh.elems()), 0.0f);
  std::vector<float> scores(size_t(S) * size_t(S));  // the S x S scratch

  for (int64_t bh = 0; bh < sh.bh(); ++bh) {
    const int64_t b = bh / sh.h;
    // scores = scale * Q K^T + mask
    for (int64_t i = 0; i < S; ++i) {
      float* row = scores.data() + size_t(i) * size_t(S);
      const float* qi = input.q_row(bh, i);
      for (int64_t j = 0; j < S; ++j) {
        if (!mask.admits(b, i, j)) {
          row[j] = neg_inf;
          continue;
        }
        const float* kj = input.k_row(bh, j);
        float acc = 0.0f;
        for (int64_t d = 0; d < D; ++d) acc += qi[d] * kj[d];
        row[j] = sc * acc;
      }
    }
    // row softmax with max subtraction
    for (int64_t i = 0; i < S; ++i) {
      float* row = scores.data() + size_t(i) * size_t(S);
      float row_max = neg_inf;
      for (int64_t j = 0; j < S; ++j)
        if (row[j] > row_max) row_max = row[j];
      if (row_max == neg_inf) {
        for (int64_t j = 0; j < S; ++j) row[j] = 0.0f;
        continue;
      }
      float denom = 0.0f;
      for (int64_t j = 0; j < S; ++j) {
        row[j] = std::exp(row[j] - row_max);
        denom += row[j];
      }
      const float inv = 1.0f / denom;
      for (int64_t j = 0; j < S; ++j) row[j] *= inv;
    }
    // O = P V
    for (int64_t i = 0; i < S; ++i) {
      const float* row = scores.data() + size_t(i) * size_t(S);
      float* oi = out.data() + size_t((bh * S + i) * D);
      for (int64_t j = 0; j < S; ++j) {
        const float w = row[j];
        if (w == 0.0f) continue;
        const float* vj = input.v_row(bh, j);
        for (int64_t d = 0; d < D; ++d) oi[d] += w * vj[d];
      }
    }
  }
  if (input.dtype != DType::F32)
    for (float& x : out) x = snap_to_dtype(x, input.dtype);
  return out;
}

}  // namespace tileattn
