#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tileattn/reference.hpp"
#include "tileattn/types.hpp"

using namespace tileattn;

namespace {

// Independent brute-force oracle: plain triple loop in long double, softmax
// without max subtraction (scores from normal inputs are O(1), no overflow).
// Deliberately structured differently from the library implementation.
std::vector<double> brute_force_sdpa(const AttnInput& in, const MaskSpec& mask,
                                     const ScaleSpec& scale) {
  const Shape& sh = in.shape;
  const long double sc = effective_scale(scale, sh.d);
  std::vector<double> out(size_t(sh.elems()), 0.0);
  for (int64_t bh = 0; bh < sh.bh(); ++bh) {
    const int64_t b = bh / sh.h;
    for (int64_t i = 0; i < sh.s; ++i) {
      long double denom = 0.0L;
      std::vector<long double> w(size_t(sh.s), 0.0L);
      bool any = false;
      for (int64_t j = 0; j < sh.s; ++j) {
        if (!mask.admits(b, i, j)) continue;
        long double dot = 0.0L;
        for (int64_t d = 0; d < sh.d; ++d)
          dot += (long double)in.q_row(bh, i)[d] * (long double)in.k_row(bh, j)[d];
        w[size_t(j)] = std::exp(sc * dot);
        denom += w[size_t(j)];
        any = true;
      }
      if (!any) continue;
      for (int64_t d = 0; d < sh.d; ++d) {
        long double acc = 0.0L;
        for (int64_t j = 0; j < sh.s; ++j)
          acc += w[size_t(j)] / denom * (long double)in.v_row(bh, j)[d];
        out[size_t((bh * sh.s + i) * sh.d + d)] = double(acc);
      }
    }
  }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("reference matches the brute-force oracle within 1e-12") {
  const AttnInput in = make_input(Shape{1, 1, 8, 4}, DType::F32, 7);
  for (const MaskSpec& mask :
       {MaskSpec::none(), MaskSpec::causal(), MaskSpec::padding({5})}) {
    const RefOutput ref = sdpa_reference(in, mask, ScaleSpec{});
    const std::vector<double> oracle = brute_force_sdpa(in, mask, ScaleSpec{});
    CHECK(max_abs_diff(ref.o, oracle) <= 1e-12);
  }
  // a larger shape with several heads
  const AttnInput in2 = make_input(Shape{2, 2, 13, 6}, DType::F32, 9);
  const RefOutput ref2 = sdpa_reference(in2, MaskSpec::causal(), ScaleSpec{});
  CHECK(max_abs_diff(ref2.o, brute_force_sdpa(in2, MaskSpec::causal(),
                                              ScaleSpec{})) <= 1e-12);
}

TEST_CASE("S=1 output is the single value row") {
  const AttnInput in = make_input(Shape{1, 1, 1, 4}, DType::F32, 3);
  const RefOutput ref = sdpa_reference(in, MaskSpec::none(), ScaleSpec{});
  for (int64_t d = 0; d < 4; ++d)
    CHECK(ref.o[size_t(d)] == double(in.v[size_t(d)]));
}

TEST_CASE("causal row 0 only sees the first value row") {
  const AttnInput in = make_input(Shape{1, 1, 2, 4}, DType::F32, 5);
  const RefOutput ref = sdpa_reference(in, MaskSpec::causal(), ScaleSpec{});
  for (int64_t d = 0; d < 4; ++d)
    CHECK(ref.o[size_t(d)] == double(in.v[size_t(d)]));
}

TEST_CASE("zero queries give uniform weights") {
  AttnInput in = make_input(Shape{1, 1, 6, 4}, DType::F32, 1);
  std::fill(in.q.begin(), in.q.end(), 0.0f);
  const RefOutput ref = sdpa_reference(in, MaskSpec::none(), ScaleSpec{});
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t d = 0; d < 4; ++d) {
      double mean = 0.0;
      for (int64_t j = 0; j < 6; ++j) mean += double(in.v_row(0, j)[d]) / 6.0;
      CHECK(ref.o_row(0, i)[d] == doctest::Approx(mean).epsilon(1e-12));
    }
  // uniform scores: the normalizer is exactly the admitted-key count
  for (int64_t i = 0; i < 6; ++i) CHECK(ref.row_sums[size_t(i)] == 6.0);
}

TEST_CASE("row normalizer is positive for admitted rows and zero otherwise") {
  const AttnInput in = make_input(Shape{2, 1, 8, 4}, DType::F32, 21);
  const RefOutput ref = sdpa_reference(in, MaskSpec::padding({0, 8}), ScaleSpec{});
  for (int64_t i = 0; i < 8; ++i) {
    CHECK(ref.row_sums[size_t(i)] == 0.0);          // batch 0 fully masked
    CHECK(ref.row_sums[size_t(8 + i)] > 0.0);       // batch 1 unmasked
    for (int64_t d = 0; d < 4; ++d) CHECK(ref.o_row(0, i)[d] == 0.0);
  }
}

TEST_CASE("shift invariance: constant score offset leaves output unchanged") {
  // k column 0 pinned to 1 so bumping q column 0 shifts every score in the
  // row by the same constant.
  AttnInput in = make_input(Shape{1, 1, 8, 4}, DType::F32, 13);
  for (int64_t j = 0; j < 8; ++j)
    const_cast<float*>(in.k_row(0, j))[0] = 1.0f;
  const ScaleSpec unit{1.0};
  const RefOutput base = sdpa_reference(in, MaskSpec::none(), unit);
  AttnInput shifted = in;
  for (int64_t i = 0; i < 8; ++i)
    const_cast<float*>(shifted.q_row(0, i))[0] += 2.5f;
  const RefOutput moved = sdpa_reference(shifted, MaskSpec::none(), unit);
  CHECK(max_abs_diff(base.o, moved.o) <= 1e-12);
}

TEST_CASE("permutation equivariance with no mask") {
  const Shape sh{1, 1, 10, 4};
  const AttnInput in = make_input(sh, DType::F32, 17);
  std::vector<int64_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(99);
  std::shuffle(perm.begin(), perm.end(), rng);
  AttnInput permuted = in;
  for (int64_t j = 0; j < 10; ++j)
    for (int64_t d = 0; d < 4; ++d) {
      const_cast<float*>(permuted.k_row(0, j))[d] = in.k_row(0, perm[size_t(j)])[d];
      const_cast<float*>(permuted.v_row(0, j))[d] = in.v_row(0, perm[size_t(j)])[d];
    }
  const RefOutput a = sdpa_reference(in, MaskSpec::none(), ScaleSpec{});
  const RefOutput b = sdpa_reference(permuted, MaskSpec::none(), ScaleSpec{});
  CHECK(max_abs_diff(a.o, b.o) <= 1e-12);
}

TEST_CASE("output rows are convex combinations of value rows") {
  const Shape sh{1, 2, 24, 8};
  const AttnInput in = make_input(sh, DType::F32, 31);
  const RefOutput ref = sdpa_reference(in, MaskSpec::none(), ScaleSpec{});
  for (int64_t bh = 0; bh < 2; ++bh)
    for (int64_t i = 0; i < 24; ++i)
      for (int64_t d = 0; d < 8; ++d) {
        double lo = 1e300, hi = -1e300;
        for (int64_t j = 0; j < 24; ++j) {
          lo = std::min(lo, double(in.v_row(bh, j)[d]));
          hi = std::max(hi, double(in.v_row(bh, j)[d]));
        }
        CHECK(ref.o_row(bh, i)[d] >= lo - 1e-12);
        CHECK(ref.o_row(bh, i)[d] <= hi + 1e-12);
      }
}

TEST_CASE("eager baseline agrees with the reference within 1e-4 in f32") {
  for (int64_t s : {64, 130, 256}) {
    const AttnInput in = make_input(Shape{1, 2, s, 64}, DType::F32, 23);
    for (const MaskSpec& mask : {MaskSpec::none(), MaskSpec::causal()}) {
      const RefOutput ref = sdpa_reference(in, mask, ScaleSpec{});
      const std::vector<float> got = sdpa_eager_baseline(in, mask, ScaleSpec{});
      double m = 0.0;
      for (size_t i = 0; i < got.size(); ++i)
        m = std::max(m, std::abs(double(got[i]) - ref.o[i]));
      CHECK(m <= 1e-4);
    }
  }
}

TEST_CASE("eager causal row 0 is exactly v0") {
  const AttnInput in = make_input(Shape{1, 1, 2, 4}, DType::F32, 5);
  const std::vector<float> out =
      sdpa_eager_baseline(in, MaskSpec::causal(), ScaleSpec{});
  for (int64_t d = 0; d < 4; ++d) CHECK(out[size_t(d)] == in.v[size_t(d)]);
}

TEST_CASE("eager all-masked padding rows are exact zeros") {
  const AttnInput in = make_input(Shape{1, 1, 4, 4}, DType::F32, 2);
  const std::vector<float> out =
      sdpa_eager_baseline(in, MaskSpec::padding({0}), ScaleSpec{});
  for (float x : out) CHECK(x == 0.0f);
}

TEST_CASE("eager output lands on the emulated dtype grid") {
  const AttnInput in = make_input(Shape{1, 1, 16, 8}, DType::F16Emu, 4);
  const std::vector<float> out =
      sdpa_eager_baseline(in, MaskSpec::none(), ScaleSpec{});
  for (float x : out) CHECK(snap_to_dtype(x, DType::F16Emu) == x);
}
