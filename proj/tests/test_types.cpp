#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "tileattn/types.hpp"

using namespace tileattn;

TEST_CASE("effective_scale defaults to 1/sqrt(D)") {
  CHECK(effective_scale(ScaleSpec{}, 64) == 0.125);
  CHECK(effective_scale(ScaleSpec{}, 128) ==
        doctest::Approx(0.0883883476483184406).epsilon(1e-15));
  CHECK(effective_scale(ScaleSpec{0.5}, 64) == 0.5);
  CHECK_THROWS_AS(effective_scale(ScaleSpec{0.0}, 64), std::invalid_argument);
  CHECK_THROWS_AS(effective_scale(ScaleSpec{-1.0}, 64), std::invalid_argument);
  CHECK_THROWS_AS(effective_scale(ScaleSpec{}, 0), std::invalid_argument);
}

TEST_CASE("effective_scale squared times D is 1 within 1 ulp on the study grid") {
  const double ulp1 = std::nextafter(1.0, 2.0) - 1.0;
  for (int64_t d : {32, 64, 96, 128, 160}) {
    const double s = effective_scale(ScaleSpec{}, d);
    // named intermediates keep -ffp-contract from fusing the product chain
    const double sq = s * s;
    const double prod = sq * double(d);
    CHECK(std::abs(prod - 1.0) <= ulp1);
  }
}

TEST_CASE("mask_additive admits the right pairs") {
  const MaskSpec causal = MaskSpec::causal();
  CHECK(mask_additive(causal, 8, 0, 3, 3) == 0.0);
  CHECK(mask_additive(causal, 8, 0, 2, 5) == kNegInf);
  const MaskSpec pad = MaskSpec::padding({4});
  CHECK(mask_additive(pad, 8, 0, 0, 4) == kNegInf);
  CHECK(mask_additive(pad, 8, 0, 0, 3) == 0.0);
  const MaskSpec none = MaskSpec::none();
  CHECK(mask_additive(none, 8, 0, 7, 0) == 0.0);
  CHECK(mask_additive(none, 8, 0, 0, 7) == 0.0);

  CHECK_THROWS_AS(mask_additive(causal, 8, 0, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(mask_additive(causal, 8, 0, 0, -1), std::invalid_argument);
  CHECK_THROWS_AS(mask_additive(pad, 8, 1, 0, 0), std::invalid_argument);
}

TEST_CASE("causal admission is exactly j <= i, exhaustively for S = 64") {
  const MaskSpec causal = MaskSpec::causal();
  for (int64_t i = 0; i < 64; ++i)
    for (int64_t j = 0; j < 64; ++j) {
      const bool admitted = mask_additive(causal, 64, 0, i, j) == 0.0;
      CHECK(admitted == (j <= i));
    }
}

TEST_CASE("snap_to_dtype rounds to nearest even") {
  // f16: quantum at [1,2) is 2^-10, at [4,8) is 2^-8
  CHECK(snap_to_dtype(1.0f, DType::F16Emu) == 1.0f);
  CHECK(snap_to_dtype(1.0f + 0x1.0p-11f, DType::F16Emu) == 1.0f);  // tie, even
  CHECK(snap_to_dtype(1.0f + 0x1.8p-11f, DType::F16Emu) == 1.0f + 0x1.0p-10f);
  // overflow: 65520 is the f16 round-to-infinity threshold
  CHECK(snap_to_dtype(65519.0f, DType::F16Emu) == 65504.0f);
  CHECK(std::isinf(snap_to_dtype(65520.0f, DType::F16Emu)));
  // subnormals: min subnormal is 2^-24
  CHECK(snap_to_dtype(0x1.0p-25f, DType::F16Emu) == 0.0f);         // tie, even
  CHECK(snap_to_dtype(0x1.8p-25f, DType::F16Emu) == 0x1.0p-24f);
  CHECK(snap_to_dtype(0x1.8p-24f, DType::F16Emu) == 0x1.0p-23f);   // tie, even
  CHECK(snap_to_dtype(-1.5f, DType::F16Emu) == -1.5f);

  // bf16: 8 mantissa bits total
  CHECK(snap_to_dtype(257.0f, DType::BF16Emu) == 256.0f);
  CHECK(snap_to_dtype(1.0f + 0x1.0p-8f, DType::BF16Emu) == 1.0f);  // tie, even
  CHECK(snap_to_dtype(3.0f, DType::BF16Emu) == 3.0f);

  CHECK(snap_to_dtype(0.1234567f, DType::F32) == 0.1234567f);
  CHECK(snap_to_dtype(0.0f, DType::F16Emu) == 0.0f);
}

TEST_CASE("bytes_per_elem reports the format width") {
  CHECK(bytes_per_elem(DType::F32) == 4);
  CHECK(bytes_per_elem(DType::F16Emu) == 2);
  CHECK(bytes_per_elem(DType::BF16Emu) == 2);
}

TEST_CASE("dtype and mask names round-trip") {
  for (DType dt : {DType::F32, DType::F16Emu, DType::BF16Emu})
    CHECK(dtype_from_string(to_string(dt)) == dt);
  for (MaskKind k : {MaskKind::None, MaskKind::Causal, MaskKind::Padding})
    CHECK(mask_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(dtype_from_string("f64"), std::invalid_argument);
}

TEST_CASE("shape validation") {
  CHECK_NOTHROW(validate(Shape{1, 1, 1, 1}));
  CHECK_THROWS_AS(validate(Shape{0, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Shape{1, 1, 1, 0}), std::invalid_argument);
  CHECK(Shape{2, 4, 8, 16}.bh() == 8);
  CHECK(Shape{2, 4, 8, 16}.elems() == 2 * 4 * 8 * 16);
}

TEST_CASE("padding mask validation against a shape") {
  const Shape sh{2, 1, 8, 4};
  CHECK_NOTHROW(validate(MaskSpec::padding({4, 8}), sh));
  CHECK_THROWS_AS(validate(MaskSpec::padding({4}), sh), std::invalid_argument);
  CHECK_THROWS_AS(validate(MaskSpec::padding({4, 9}), sh), std::invalid_argument);
  CHECK_NOTHROW(validate(MaskSpec::causal(), sh));
}

TEST_CASE("make_input is deterministic in (shape, dtype, seed)") {
  const Shape sh{2, 2, 16, 8};
  const AttnInput a = make_input(sh, DType::F32, 42);
  const AttnInput b = make_input(sh, DType::F32, 42);
  CHECK(std::memcmp(a.q.data(), b.q.data(), a.q.size() * 4) == 0);
  CHECK(std::memcmp(a.k.data(), b.k.data(), a.k.size() * 4) == 0);
  CHECK(std::memcmp(a.v.data(), b.v.data(), a.v.size() * 4) == 0);

  const AttnInput c = make_input(sh, DType::F32, 43);
  bool any_diff = false;
  for (size_t i = 0; i < a.q.size(); ++i) any_diff |= a.q[i] != c.q[i];
  CHECK(any_diff);
}

TEST_CASE("make_input values are finite and on the dtype grid") {
  const Shape sh{1, 2, 32, 16};
  for (DType dt : {DType::F32, DType::F16Emu, DType::BF16Emu}) {
    const AttnInput in = make_input(sh, dt, 7);
    for (const auto* t : {&in.q, &in.k, &in.v})
      for (float x : *t) {
        CHECK(std::isfinite(x));
        CHECK(snap_to_dtype(x, dt) == x);  // grid membership
      }
  }
}

TEST_CASE("flattening [B,H,S,D] to [BH,S,D] preserves coordinates") {
  const Shape sh{3, 2, 5, 4};
  const AttnInput in = make_input(sh, DType::F32, 11);
  for (int64_t b = 0; b < sh.b; ++b)
    for (int64_t h = 0; h < sh.h; ++h)
      for (int64_t s = 0; s < sh.s; ++s)
        for (int64_t d = 0; d < sh.d; ++d) {
          const int64_t bh = b * sh.h + h;
          const size_t flat4 = size_t(((b * sh.h + h) * sh.s + s) * sh.d + d);
          CHECK(in.q_row(bh, s)[d] == in.q[flat4]);
          CHECK(in.v_row(bh, s)[d] == in.v[flat4]);
        }
}
