#include "tileattn/types.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace tileattn {

int bytes_per_elem(DType dt) {
  switch (dt) {
    case DType::F32: return 4;
    case DType::F16Emu: return 2;
    case DType::BF16Emu: return 2;
  }
  return 4;
}

std::string_view to_string(DType dt) {
  switch (dt) {
    case DType::F32: return "f32";
    case DType::F16Emu: return "f16";
    case DType::BF16Emu: return "bf16";
  }
  return "f32";
}

DType dtype_from_string(std::string_view s) {
  if (s == "f32" || s == "fp32") return DType::F32;
  if (s == "f16" || s == "fp16") return DType::F16Emu;
  if (s == "bf16") return DType::BF16Emu;
  throw std::invalid_argument("unknown dtype: " + std::string(s));
}

std::string_view to_string(MaskKind k) {
  switch (k) {
    case MaskKind::None: return "none";
    case MaskKind::Causal: return "causal";
    case MaskKind::Padding: return "padding";
  }
  return "none";
}

MaskKind mask_kind_from_string(std::string_view s) {
  if (s == "none") return MaskKind::None;
  if (s == "causal") return MaskKind::Causal;
  if (s == "padding") return MaskKind::Padding;
  throw std::invalid_argument("unknown mask kind: " + std::string(s));
}

namespace {

// Round to the nearest point of a binary format with `mant_bits` explicit
// mantissa bits and minimum normal exponent `min_exp`. Works by exact
// rescaling into integer space and a single RNE rounding, so subnormals and
// halfway cases come out right.
float snap_to_grid(float v, int mant_bits, int min_exp, double max_finite) {
  if (v == 0.0f || !std::isfinite(v)) return v;
  int e;
  std::frexp(v, &e);                            // |v| in [2^(e-1), 2^e)
  int exp = e - 1;                              // floor(log2 |v|)
  int qe = std::max(exp, min_exp) - mant_bits;  // grid quantum = 2^qe
  double r = std::nearbyint(std::ldexp(double(v), -qe));
  double q = std::ldexp(r, qe);
  if (std::abs(q) > max_finite)
    return std::copysign(std::numeric_limits<float>::infinity(), v);
  return float(q);
}

}  // namespace

float snap_to_dtype(float v, DType dt) {
  switch (dt) {
    case DType::F32: return v;
    case DType::F16Emu: return snap_to_grid(v, 10, -14, 65504.0);
    case DType::BF16Emu: return snap_to_grid(v, 7, -126, 3.38953138925153547590470800371487867e38);
  }
  return v;
}

void validate(const Shape& shape) {
  if (shape.b < 1 || shape.h < 1 || shape.s < 1 || shape.d < 1)
    throw std::invalid_argument("shape extents must all be >= 1");
}

double mask_additive(const MaskSpec& mask, int64_t seq_len, int64_t b,
                     int64_t i, int64_t j) {
  if (i < 0 || i >= seq_len || j < 0 || j >= seq_len)
    throw std::invalid_argument("mask_additive: index out of range");
  if (mask.kind == MaskKind::Padding) {
    if (b < 0 || size_t(b) >= mask.valid_len.size())
      throw std::invalid_argument("mask_additive: batch index out of range");
    int64_t vl = mask.valid_len[size_t(b)];
    if (vl < 0 || vl > seq_len)
      throw std::invalid_argument("mask_additive: valid_len out of range");
  }
  return mask.admits(b, i, j) ? 0.0 : kNegInf;
}

void validate(const MaskSpec& mask, const Shape& shape) {
  if (mask.kind != MaskKind::Padding) return;
  if (mask.valid_len.size() != size_t(shape.b))
    throw std::invalid_argument("padding mask needs one valid_len per batch");
  for (int64_t vl : mask.valid_len)
    if (vl < 0 || vl > shape.s)
      throw std::invalid_argument("padding valid_len out of [0,S]");
}

double effective_scale(const ScaleSpec& scale, int64_t d) {
  if (d < 1) throw std::invalid_argument("effective_scale: D must be >= 1");
  if (scale.value) {
    if (*scale.value <= 0.0)
      throw std::invalid_argument("effective_scale: explicit scale must be > 0");
    return *scale.value;
  }
  return 1.0 / std::sqrt(double(d));
}

namespace {

// Box-Muller on top of mt19937_64. std::normal_distribution is
// implementation-defined across standard libraries; this generator pins the
// byte-exact reproducibility contract of make_input.
class NormalGen {
 public:
  explicit NormalGen(uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - unit();  // (0,1]
    double u2 = unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  double unit() { return double(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

AttnInput make_input(const Shape& shape, DType dtype, uint64_t seed) {
  validate(shape);
  AttnInput in;
  in.shape = shape;
  in.dtype = dtype;
  const size_t n = size_t(shape.elems());
  in.q.resize(n);
  in.k.resize(n);
  in.v.resize(n);
  NormalGen gen(seed);
  for (auto* t : {&in.q, &in.k, &in.v})
    for (float& x : *t) x = snap_to_dtype(float(gen.next()), dtype);
  return in;
}

}  // namespace tileattn
