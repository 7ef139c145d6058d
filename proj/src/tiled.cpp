#include "tileattn/tiled.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <thread>

namespace tileattn {

std::string_view to_string(TileLayout layout) {
  return layout == TileLayout::RowPacked ? "row" : "col";
}

TileLayout layout_from_string(std::string_view s) {
  if (s == "row") return TileLayout::RowPacked;
  if (s == "col") return TileLayout::ColPacked;
  throw std::invalid_argument("unknown tile layout: " + std::string(s));
}

bool schedule_supported(const TileSchedule& sched) {
  const bool tm_ok = sched.t_m == 16 || sched.t_m == 32 || sched.t_m == 64 ||
                     sched.t_m == 128;
  const bool tn_ok = sched.t_n == 16 || sched.t_n == 32 || sched.t_n == 64 ||
                     sched.t_n == 128 || sched.t_n == 256;
  return tm_ok && tn_ok && sched.stages >= 1 && sched.stages <= 4;
}

void validate(const TileSchedule& sched) {
  if (!schedule_supported(sched))
    throw UnsupportedScheduleError(
        "unsupported schedule: t_m=" + std::to_string(sched.t_m) +
        " t_n=" + std::to_string(sched.t_n) +
        " stages=" + std::to_string(sched.stages));
}

Plan::Plan(const PlanKey& k) : key(k) {
  TileSchedule probe;
  probe.t_m = k.t_m;
  probe.t_n = k.t_n;
  validate(probe);
  if (k.d < 1)
    throw UnsupportedScheduleError("unsupported head dim: " + std::to_string(k.d));
  q_tile_elems = size_t(k.t_m) * size_t(k.d);
  kv_tile_elems = size_t(k.t_n) * size_t(k.d);
  score_elems = size_t(k.t_m) * size_t(k.t_n);
  state_elems = size_t(k.t_m) * size_t(k.d + 2);
}

std::shared_ptr<const Plan> PlanCache::get(const PlanKey& key) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(key);
    if (it != plans_.end()) {
      hits_.fetch_add(1, std::memory_order_relaxed);
      return it->second;
    }
  }
  // Construct outside the lock; a concurrent first construction of the same
  // key may duplicate work but both plans are equivalent.
  auto plan = std::make_shared<const Plan>(key);
  constructions_.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = plans_.emplace(key, std::move(plan));
  return it->second;
}

std::shared_ptr<const Plan> get_plan(const PlanKey& key, PlanCache& cache) {
  return cache.get(key);
}

int resolve_thread_count(int requested) {
  int hw = int(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  int n = requested > 0 ? requested : hw;
  if (const char* env = std::getenv("TILEATTN_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, int(cap));
  }
  return std::max(1, n);
}

namespace {

// Runs body(item, worker) over [0, n_items) on `workers` threads. workers <= 1
// executes inline for deterministic debugging. The first exception thrown by
// any worker is rethrown after joining.
void parallel_items(int64_t n_items, int workers,
                    const std::function<void(int64_t, int)>& body) {
  if (workers <= 1 || n_items <= 1) {
    for (int64_t i = 0; i < n_items; ++i) body(i, 0);
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto run = [&](int w) {
    try {
      for (;;) {
        const int64_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n_items) return;
        body(i, w);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
      next.store(n_items);  // drain remaining work
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

template <typename Acc>
void run_tiled(const AttnInput& input, const MaskSpec& mask, double scale_val,
               const TileSchedule& sched, const TiledOptions& options,
               float* out) {
  const Shape& sh = input.shape;
  const int64_t S = sh.s, D = sh.d, BH = sh.bh(), H = sh.h;
  const int t_m = sched.t_m, t_n = sched.t_n, stages = sched.stages;
  const bool causal = mask.kind == MaskKind::Causal;
  const bool padding = mask.kind == MaskKind::Padding;
  const Acc scale = Acc(scale_val);
  const Acc neg_inf = Acc(kNegInf);

  const int64_t n_qtiles = (S + t_m - 1) / t_m;
  const int64_t n_ktiles = (S + t_n - 1) / t_n;
  const int64_t n_items = BH * n_qtiles;
  const int workers =
      int(std::min<int64_t>(resolve_thread_count(options.threads), n_items));

  struct Scratch {
    std::vector<float> q_pack, k_ring, v_ring;
    std::vector<Acc> scores;
    SoftmaxState<Acc> st;
    uint64_t visited = 0;
  };

  auto item_body = [&](int64_t item, Scratch& scratch) {
    auto& [q_pack, k_ring, v_ring, scores, st, visited] = scratch;
    const int64_t bh = item / n_qtiles;
    const int64_t qt = item % n_qtiles;
    const int64_t b = bh / H;
    const int64_t r0 = qt * t_m;
    const int rows = int(std::min<int64_t>(t_m, S - r0));
    const int64_t last_row = r0 + rows - 1;

    for (int r = 0; r < rows; ++r)
      std::memcpy(q_pack.data() + size_t(r) * size_t(D), input.q_row(bh, r0 + r),
                  size_t(D) * sizeof(float));
    st.reset(rows, D);

    // Causal: K/V tiles starting past the last query row are never read.
    const int64_t kv_end = causal ? (last_row / t_n + 1) : n_ktiles;
    const int64_t vl = padding ? mask.valid_len[size_t(b)] : S;

    auto pack_kv = [&](int64_t t) {
      const size_t slot = size_t(t % stages);
      const int64_t c0 = t * t_n;
      const int cols = int(std::min<int64_t>(t_n, S - c0));
      float* kd = k_ring.data() + slot * size_t(t_n) * size_t(D);
      float* vd = v_ring.data() + slot * size_t(t_n) * size_t(D);
      if (sched.layout == TileLayout::ColPacked) {
        for (int c = 0; c < cols; ++c) {
          const float* src = input.k_row(bh, c0 + c);
          for (int64_t k = 0; k < D; ++k) kd[size_t(k) * size_t(cols) + size_t(c)] = src[k];
        }
      } else {
        for (int c = 0; c < cols; ++c)
          std::memcpy(kd + size_t(c) * size_t(D), input.k_row(bh, c0 + c),
                      size_t(D) * sizeof(float));
      }
      for (int c = 0; c < cols; ++c)
        std::memcpy(vd + size_t(c) * size_t(D), input.v_row(bh, c0 + c),
                    size_t(D) * sizeof(float));
    };

    for (int64_t t = 0; t < std::min<int64_t>(stages, kv_end); ++t) pack_kv(t);

    for (int64_t t = 0; t < kv_end; ++t) {
      const size_t slot = size_t(t % stages);
      const int64_t c0 = t * t_n;
      const int cols = int(std::min<int64_t>(t_n, S - c0));
      const float* k_tile = k_ring.data() + slot * size_t(t_n) * size_t(D);
      const float* v_tile = v_ring.data() + slot * size_t(t_n) * size_t(D);

      score_tile<Acc>(q_pack.data(), rows, D, k_tile, cols, sched.layout,
                      scale, scores.data());

      if (causal && c0 + cols - 1 > r0) {
        // Diagonal-straddling tile: mask entries strictly above the diagonal.
        for (int r = 0; r < rows; ++r) {
          const int64_t qi = r0 + r;
          Acc* row = scores.data() + size_t(r) * size_t(cols);
          for (int c = 0; c < cols; ++c)
            if (c0 + c > qi) row[c] = neg_inf;
        }
      } else if (padding && c0 + cols > vl) {
        const int lo = int(std::max<int64_t>(0, vl - c0));
        for (int r = 0; r < rows; ++r) {
          Acc* row = scores.data() + size_t(r) * size_t(cols);
          for (int c = lo; c < cols; ++c) row[c] = neg_inf;
        }
      }

      online_update<Acc>(st, scores.data(), cols, v_tile);
      ++visited;
      if (t + stages < kv_end) pack_kv(t + stages);
    }

    float* dst = out + size_t((bh * S + r0) * D);
    finalize<Acc>(st, dst, D);
    if (input.dtype != DType::F32)
      for (size_t i = 0; i < size_t(rows) * size_t(D); ++i)
        dst[i] = snap_to_dtype(dst[i], input.dtype);
  };

  std::vector<Scratch> scratch(static_cast<size_t>(workers));
  for (auto& s : scratch) {
    s.q_pack.resize(size_t(t_m) * size_t(D));
    s.k_ring.resize(size_t(stages) * size_t(t_n) * size_t(D));
    s.v_ring.resize(size_t(stages) * size_t(t_n) * size_t(D));
    s.scores.resize(size_t(t_m) * size_t(t_n));
    s.st.reset(t_m, D);
  }

  parallel_items(n_items, workers, [&](int64_t item, int w) {
    item_body(item, scratch[size_t(w)]);
  });

  if (options.stats) {
    uint64_t total = 0;
    uint64_t peak = 0;
    for (const auto& s : scratch) {
      total += s.visited;
      const uint64_t elems = s.q_pack.capacity() + s.k_ring.capacity() +
                             s.v_ring.capacity() + s.scores.capacity() +
                             s.st.scratch_elems();
      peak = std::max(peak, elems);
    }
    options.stats->kv_tiles_visited.fetch_add(total);
    options.stats->note_scratch(peak);
  }
}

}  // namespace

std::vector<float> sdpa_tiled(const AttnInput& input, const MaskSpec& mask,
                              const ScaleSpec& scale, const TileSchedule& sched,
                              PlanCache& cache, const TiledOptions& options) {
  validate(input.shape);
  validate(mask, input.shape);
  validate(sched);
  const double sc = effective_scale(scale, input.shape.d);

  const PlanKey key{sched.t_m, sched.t_n, input.shape.d, input.dtype,
                    mask.kind == MaskKind::Causal};
  auto plan = get_plan(key, cache);
  (void)plan;  // loop extents below match the plan's descriptors

  std::vector<float> out(size_t(input.shape.elems()));
  if (options.accum == AccumMode::F64)
    run_tiled<double>(input, mask, sc, sched, options, out.data());
  else
    run_tiled<float>(input, mask, sc, sched, options, out.data());
  return out;
}

}  // namespace tileattn
