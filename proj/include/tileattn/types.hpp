#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tileattn {

// Element precision of the q/k/v tensors. Reduced precisions are emulated:
// values are snapped to the 16-bit grid on creation but held in f32 words.
// bytes_per_elem still reports the format's true width for traffic proxies.
enum class DType { F32, F16Emu, BF16Emu };

int bytes_per_elem(DType dt);
std::string_view to_string(DType dt);
DType dtype_from_string(std::string_view s);

// Rounds v to the nearest value representable in the given 16-bit format
// (round-to-nearest-even, subnormals included). F32 passes through.
float snap_to_dtype(float v, DType dt);

// Logical tensor shape [B,H,S,D]. Kernels iterate the flattened BH = B*H
// leading dimension.
struct Shape {
  int64_t b = 1;  // batch count
  int64_t h = 1;  // head count
  int64_t s = 1;  // sequence length (tokens)
  int64_t d = 1;  // per-head channel dimension

  int64_t bh() const { return b * h; }
  int64_t elems() const { return b * h * s * d; }
  bool operator==(const Shape&) const = default;
};

// Throws std::invalid_argument if any extent is < 1.
void validate(const Shape& shape);

enum class MaskKind { None, Causal, Padding };

std::string_view to_string(MaskKind k);
MaskKind mask_kind_from_string(std::string_view s);

// Score-level mask. Causal admits key j for query i iff j <= i. Padding
// admits j iff j < valid_len[b] (key-side only; query rows are not masked).
struct MaskSpec {
  MaskKind kind = MaskKind::None;
  std::vector<int64_t> valid_len;  // per-batch, Padding only; entries in [0,S]

  static MaskSpec none() { return {}; }
  static MaskSpec causal() { return {MaskKind::Causal, {}}; }
  static MaskSpec padding(std::vector<int64_t> lens) {
    return {MaskKind::Padding, std::move(lens)};
  }

  // Unchecked hot-path predicate.
  bool admits(int64_t b, int64_t i, int64_t j) const {
    switch (kind) {
      case MaskKind::None: return true;
      case MaskKind::Causal: return j <= i;
      case MaskKind::Padding: return j < valid_len[size_t(b)];
    }
    return true;
  }
};

// Additive mask term of the score equation: 0 when (i,j) is admitted,
// -inf otherwise. Range-checks indices against seq_len and throws
// std::invalid_argument on violation.
double mask_additive(const MaskSpec& mask, int64_t seq_len, int64_t b,
                     int64_t i, int64_t j);

// Padding masks must carry one valid_len entry per batch, each in [0,S].
void validate(const MaskSpec& mask, const Shape& shape);

// Optional explicit softmax scale; when absent the effective scale is
// 1/sqrt(D).
struct ScaleSpec {
  std::optional<double> value;
};

// Returns the explicit scale when present (must be > 0, else
// std::invalid_argument), otherwise 1/sqrt(D).
double effective_scale(const ScaleSpec& scale, int64_t d);

// Dense q/k/v tensors of logical shape [B,H,S,D], row-major with D
// innermost. All values finite and on the dtype grid.
struct AttnInput {
  Shape shape;
  DType dtype = DType::F32;
  std::vector<float> q, k, v;

  const float* q_row(int64_t bh, int64_t s) const {
    return q.data() + (bh * shape.s + s) * shape.d;
  }
  const float* k_row(int64_t bh, int64_t s) const {
    return k.data() + (bh * shape.s + s) * shape.d;
  }
  const float* v_row(int64_t bh, int64_t s) const {
    return v.data() + (bh * shape.s + s) * shape.d;
  }
};

// Deterministic workload generator: standard-normal values snapped to the
// dtype grid. Identical (shape, dtype, seed) yields identical bytes.
AttnInput make_input(const Shape& shape, DType dtype, uint64_t seed);

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace tileattn
