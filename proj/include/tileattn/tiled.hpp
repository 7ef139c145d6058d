#pragma once

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "tileattn/types.hpp"

namespace tileattn {

// ---------------------------------------------------------------------------
// Schedule and plan cache
// ---------------------------------------------------------------------------

enum class TileLayout { RowPacked, ColPacked };

std::string_view to_string(TileLayout layout);
TileLayout layout_from_string(std::string_view s);

// The exposed schedule knobs: query-tile rows, key/value-tile columns,
// lookahead depth of the K/V packing ring, and K-tile packing order.
// RowPacked packs K tiles as [t_n][D]; ColPacked packs the transpose
// [D][t_n] so the reduction dimension is contiguous in the inner loop.
struct TileSchedule {
  int t_m = 64;
  int t_n = 128;
  int stages = 2;
  TileLayout layout = TileLayout::RowPacked;

  bool operator==(const TileSchedule&) const = default;
};

struct UnsupportedScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// t_m in {16,32,64,128}, t_n in {16,32,64,128,256}, stages in [1,4].
// Validity is independent of S; partial edge tiles are handled.
bool schedule_supported(const TileSchedule& sched);
void validate(const TileSchedule& sched);  // throws UnsupportedScheduleError

struct PlanKey {
  int t_m = 0;
  int t_n = 0;
  int64_t d = 0;
  DType dtype = DType::F32;
  bool causal = false;

  auto tie() const { return std::tuple(t_m, t_n, d, int(dtype), causal); }
  bool operator==(const PlanKey& o) const { return tie() == o.tie(); }
  bool operator<(const PlanKey& o) const { return tie() < o.tie(); }
};

// Derived per-key execution descriptor: tile buffer extents and loop
// bookkeeping that depend only on (t_m, t_n, D, dtype, causal).
struct Plan {
  PlanKey key;
  size_t q_tile_elems = 0;      // t_m * D
  size_t kv_tile_elems = 0;     // t_n * D (per ring slot, each of K and V)
  size_t score_elems = 0;       // t_m * t_n
  size_t state_elems = 0;       // t_m * (D + 2)

  explicit Plan(const PlanKey& k);  // throws UnsupportedScheduleError
};

// Memoizes plans by key. Lookups may run concurrently; a duplicated first
// construction of one key returns equivalent plans.
class PlanCache {
 public:
  std::shared_ptr<const Plan> get(const PlanKey& key);

  uint64_t hits() const { return hits_.load(); }
  uint64_t constructions() const { return constructions_.load(); }

 private:
  mutable std::mutex mu_;
  std::map<PlanKey, std::shared_ptr<const Plan>> plans_;
  std::atomic<uint64_t> hits_{0};
  std::atomic<uint64_t> constructions_{0};
};

std::shared_ptr<const Plan> get_plan(const PlanKey& key, PlanCache& cache);

// ---------------------------------------------------------------------------
// Fast exp for the f32 accumulation path
// ---------------------------------------------------------------------------

// Polynomial expf for non-positive arguments (post max-subtraction scores).
// Branch-free except for range selects, so loops over score blocks stay
// vectorizable. Maps -inf (and anything below the f32 underflow cutoff) to
// exact 0; fast_expf(0) == 1 exactly. Relative error ~2 ulp.
inline float fast_expf(float x) {
  float xc = x < -87.0f ? -87.0f : x;
  const float fn = std::nearbyint(xc * 1.44269504088896341f);
  const int32_t n = int32_t(fn);
  float r = xc - fn * 0.693359375f;
  r -= fn * -2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  float y = p * r * r + r + 1.0f;
  y = std::bit_cast<float>(std::bit_cast<int32_t>(y) + (n << 23));
  return x < -87.0f ? 0.0f : y;
}

namespace detail {
inline float acc_exp(float x) { return fast_expf(x); }
inline double acc_exp(double x) { return std::exp(x); }
}  // namespace detail

// ---------------------------------------------------------------------------
// Online-softmax state and tile operations
// ---------------------------------------------------------------------------

// Per-query-row running statistics for a block of up to t_m rows:
// m = running max (init -inf), l = running normalizer (init 0),
// o = running output accumulator (init 0), all in accumulation precision.
// l == 0 iff no admitted key has been processed for that row.
template <typename Acc>
struct SoftmaxState {
  int rows = 0;
  int64_t d = 0;
  std::vector<Acc> m;  // [rows]
  std::vector<Acc> l;  // [rows]
  std::vector<Acc> o;  // [rows * d]

  void reset(int new_rows, int64_t new_d) {
    rows = new_rows;
    d = new_d;
    m.assign(size_t(rows), Acc(kNegInf));
    l.assign(size_t(rows), Acc(0));
    o.assign(size_t(rows) * size_t(d), Acc(0));
  }

  size_t scratch_elems() const { return m.capacity() + l.capacity() + o.capacity(); }
};

// scores[r*cols + c] = scale * <q_r, k_c>, accumulated in Acc precision.
// RowPacked k_tile is [cols][d]; ColPacked is [d][cols].
template <typename Acc>
void score_tile(const float* q_tile, int rows, int64_t d, const float* k_tile,
                int cols, TileLayout layout, Acc scale, Acc* scores) {
  if (layout == TileLayout::ColPacked) {
    for (int r = 0; r < rows; ++r) {
      Acc* out = scores + size_t(r) * size_t(cols);
      for (int c = 0; c < cols; ++c) out[c] = Acc(0);
      const float* q = q_tile + size_t(r) * size_t(d);
      for (int64_t k = 0; k < d; ++k) {
        const Acc qv = Acc(q[k]);
        const float* kt = k_tile + size_t(k) * size_t(cols);
        for (int c = 0; c < cols; ++c) out[c] += qv * Acc(kt[c]);
      }
      for (int c = 0; c < cols; ++c) out[c] *= scale;
    }
    return;
  }
  for (int r = 0; r < rows; ++r) {
    const float* q = q_tile + size_t(r) * size_t(d);
    Acc* out = scores + size_t(r) * size_t(cols);
    for (int c = 0; c < cols; ++c) {
      const float* kc = k_tile + size_t(c) * size_t(d);
      Acc a0 = 0, a1 = 0, a2 = 0, a3 = 0;
      int64_t k = 0;
      for (; k + 4 <= d; k += 4) {
        a0 += Acc(q[k]) * Acc(kc[k]);
        a1 += Acc(q[k + 1]) * Acc(kc[k + 1]);
        a2 += Acc(q[k + 2]) * Acc(kc[k + 2]);
        a3 += Acc(q[k + 3]) * Acc(kc[k + 3]);
      }
      for (; k < d; ++k) a0 += Acc(q[k]) * Acc(kc[k]);
      out[c] = scale * ((a0 + a1) + (a2 + a3));
    }
  }
}

// One streamed K/V tile: fold a masked score block (rows x cols, -inf for
// masked entries) and its value tile ([cols][d]) into the running state.
// Per row:  m' = max(m, max_j s_j)
//           l' = l*e^(m-m') + sum_j e^(s_j-m')
//           o' = o*e^(m-m') + sum_j e^(s_j-m') * v_j
// Rows with every score so far masked stay in the init state; e^(-inf) is
// exact 0, and the l == 0 guard rules out the -inf minus -inf path.
// The score block is overwritten with the exp weights.
template <typename Acc>
void online_update(SoftmaxState<Acc>& st, Acc* scores, int cols,
                   const float* v_tile) {
  const int64_t d = st.d;
  for (int r = 0; r < st.rows; ++r) {
    Acc* s = scores + size_t(r) * size_t(cols);
    Acc tile_max = s[0];
    for (int c = 1; c < cols; ++c)
      if (s[c] > tile_max) tile_max = s[c];
    const Acc m_old = st.m[size_t(r)];
    const Acc m_new = tile_max > m_old ? tile_max : m_old;
    if (m_new == Acc(kNegInf)) continue;  // nothing admitted yet
    for (int c = 0; c < cols; ++c) s[c] = detail::acc_exp(s[c] - m_new);
    Acc sum = 0;
    for (int c = 0; c < cols; ++c) sum += s[c];
    const Acc alpha = detail::acc_exp(m_old - m_new);
    st.m[size_t(r)] = m_new;
    st.l[size_t(r)] = st.l[size_t(r)] * alpha + sum;
    Acc* o = st.o.data() + size_t(r) * size_t(d);
    if (alpha != Acc(1))
      for (int64_t k = 0; k < d; ++k) o[k] *= alpha;
    for (int c = 0; c < cols; ++c) {
      const Acc w = s[c];
      if (w == Acc(0)) continue;
      const float* v = v_tile + size_t(c) * size_t(d);
      for (int64_t k = 0; k < d; ++k) o[k] += w * Acc(v[k]);
    }
  }
}

// O_i = o_i / l_i for rows with admitted keys; exact zero rows otherwise.
// Out = double keeps the full accumulation precision for verification.
template <typename Acc, typename Out = float>
void finalize(const SoftmaxState<Acc>& st, Out* out, int64_t row_stride) {
  for (int r = 0; r < st.rows; ++r) {
    Out* dst = out + size_t(r) * size_t(row_stride);
    const Acc l = st.l[size_t(r)];
    const Acc* o = st.o.data() + size_t(r) * size_t(st.d);
    if (l == Acc(0)) {
      for (int64_t k = 0; k < st.d; ++k) dst[k] = Out(0);
      continue;
    }
    const Acc inv = Acc(1) / l;
    for (int64_t k = 0; k < st.d; ++k) dst[k] = Out(o[k] * inv);
  }
}

// ---------------------------------------------------------------------------
// Forward kernel
// ---------------------------------------------------------------------------

enum class AccumMode { F32, F64 };

// Optional instrumentation filled by sdpa_tiled.
struct KernelStats {
  std::atomic<uint64_t> kv_tiles_visited{0};
  std::atomic<uint64_t> peak_scratch_elems{0};  // max over workers

  void note_scratch(uint64_t elems) {
    uint64_t cur = peak_scratch_elems.load(std::memory_order_relaxed);
    while (cur < elems &&
           !peak_scratch_elems.compare_exchange_weak(cur, elems)) {
    }
  }
};

struct TiledOptions {
  int threads = 0;  // 0 = auto; TILEATTN_THREADS caps the worker count
  AccumMode accum = AccumMode::F32;
  KernelStats* stats = nullptr;
};

// Worker count after applying the TILEATTN_THREADS cap. requested == 0
// resolves to hardware concurrency.
int resolve_thread_count(int requested);

// Blockwise online-softmax SDPA forward. Work decomposes into independent
// (bh, query-tile) items; each loads its Q tile once and streams K/V tiles
// with `stages` lookahead slots. Causal masks skip K/V tiles strictly above
// the diagonal and mask the straddling tile per element. Output matches
// sdpa_reference within dtype tolerance; no S x S buffer is ever allocated.
std::vector<float> sdpa_tiled(const AttnInput& input, const MaskSpec& mask,
                              const ScaleSpec& scale,
                              const TileSchedule& sched, PlanCache& cache,
                              const TiledOptions& options = {});

}  // namespace tileattn
