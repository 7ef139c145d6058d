#pragma once

#include <span>
#include <string>
#include <vector>

#include "tileattn/bench.hpp"

namespace tileattn {

// Throughput in tokens/s: B*H*S / t_fwd. Requires t_fwd_ms > 0.
double tokens_per_second(int64_t b, int64_t h, int64_t s, double t_fwd_ms);

// Input/output-traffic proxy in bytes/s: 4*B*H*S*D*bytes_per_elem / t_fwd.
// Used for relative memory-bound analysis only.
double bandwidth_proxy(int64_t b, int64_t h, int64_t s, int64_t d,
                       int bytes_per_elem, double t_fwd_ms);

// FLOP rate cross-check column: forward SDPA is two GEMMs, 4*B*H*S^2*D FLOPs.
double flop_rate(int64_t b, int64_t h, int64_t s, int64_t d, double t_fwd_ms);

// Divides every value by the panel maximum; the max maps to exactly 1.0 and
// NaN passes through. Throws std::invalid_argument when no finite value
// exists. Panel scope is one (D, dtype, mask) slice.
std::vector<double> normalize_bw(std::span<const double> values);

// One cell of the relative-performance regime map: method throughput as a
// percent of the baseline (100 = parity) at a given (S, D).
struct RegimeCell {
  int64_t s = 0;
  int64_t d = 0;
  double percent = 0.0;  // NaN when either side of any matched pair is NaN
};

// Pairs method/baseline records on (B,H,S,D,dtype,causal) and aggregates per
// (S,D) cell. A cell with several matched pairs (multiple dtypes or masks)
// is their mean percent; any NaN pair makes the cell NaN. Cells without a
// matched pair are NaN. Cells are ordered by (S, D).
std::vector<RegimeCell> regime_map(const std::vector<BenchRecord>& records,
                                   const std::string& method,
                                   const std::string& baseline);

struct RatioAggregate {
  double mean_ratio = 0.0;    // over finite per-point ratios
  double median_ratio = 0.0;
  int wins = 0;               // ratio > 1
  int total = 0;              // finite ratio count
};

// Per paired point: ratio = method tokens/s over baseline tokens/s.
RatioAggregate aggregate_ratios(const std::vector<BenchRecord>& records,
                                const std::string& method,
                                const std::string& baseline);

// Best/runner-up schedule per shape group from a tuning sweep.
struct SensitivityRow {
  std::string regime;  // short / mid / long by S
  int64_t s = 0;
  int64_t d = 0;
  DType dtype = DType::F32;
  bool causal = false;
  TileSchedule best;
  TileSchedule runner_up;
  double best_tokens_per_s = 0.0;
  double runner_up_tokens_per_s = 0.0;
  double drop_percent = 0.0;  // 100 * (best - runner_up) / best
};

// Groups ok-status records by (S,D,dtype,causal); every group needs at least
// two distinct ok schedules, else std::invalid_argument.
std::vector<SensitivityRow> sensitivity(
    const std::vector<BenchRecord>& tune_records);

// Renders the three standard views as deterministic SVGs with the plotted
// data as companion CSVs: throughput vs S with downward p95 whiskers,
// the (S,D) regime heatmap (method vs baseline), and the normalized
// bandwidth proxy for the largest (D,dtype,mask) panel. Empty record sets
// are a warning no-op. Repeated runs on identical input are byte-identical.
void emit_plots(const std::vector<BenchRecord>& records,
                const std::string& out_dir,
                const std::string& method = "tiled",
                const std::string& baseline = "eager");

}  // namespace tileattn
