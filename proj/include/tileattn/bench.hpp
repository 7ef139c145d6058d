#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tileattn/tiled.hpp"
#include "tileattn/types.hpp"

namespace tileattn {

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

struct TimingStats {
  int n_warmup = 0;
  int n_timed = 0;
  std::vector<double> samples_ms;  // one entry per timed iteration
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

// median = average of the two middle order statistics for even n, the middle
// one for odd n; p95 = nearest-rank order statistic at ceil(0.95*n).
// Throws std::invalid_argument on an empty sample list.
std::pair<double, double> quantiles(const std::vector<double>& samples);

// Runs n_warmup untimed calls (plan-cache population), then n_timed calls
// each individually wrapped in a monotonic clock. Requires n_warmup >= 1 and
// n_timed >= 3. Exceptions from the callable propagate to the caller.
TimingStats time_method(const std::function<void()>& call, int n_warmup,
                        int n_timed);

// ---------------------------------------------------------------------------
// Correctness gate
// ---------------------------------------------------------------------------

struct Workload {
  AttnInput input;
  MaskSpec mask;
  ScaleSpec scale;
};

struct CheckResult {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  double tol_used = 0.0;
  bool passed = false;
};

// Max-abs-error tolerance of the correctness gate per dtype:
// f32 1e-4, f16 5e-3, bf16 2e-2.
double check_tolerance(DType dt);

// Runs the method and sdpa_reference on the identical workload and compares
// element-wise. Requires S <= 256 (oracle cost); larger shapes are gated via
// a down-scaled twin by the caller.
CheckResult check_correctness(
    const std::function<std::vector<float>(const Workload&)>& method,
    const Workload& workload, DType dtype);

// ---------------------------------------------------------------------------
// Grid sweeps
// ---------------------------------------------------------------------------

enum class BenchStatus { Ok, Unsupported, Oom, CheckFailed };

std::string_view to_string(BenchStatus s);
BenchStatus bench_status_from_string(std::string_view s);

// One measured grid point. status != Ok implies every metric field is NaN
// and status_detail is non-empty.
struct BenchRecord {
  std::string method;
  int64_t b = 0, h = 0, s = 0, d = 0;
  DType dtype = DType::F32;
  bool causal = false;
  std::optional<TileSchedule> schedule;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double tokens_per_s = 0.0;
  double bw_proxy = 0.0;
  BenchStatus status = BenchStatus::Ok;
  std::string status_detail;
};

// Reproducibility manifest written as a JSON sidecar next to the CSV.
struct RunManifest {
  std::string hardware;
  std::string artifact_version;
  std::string clock_source;
  std::string date;
  int n_warmup = 0;
  int n_timed = 0;
  uint64_t seed = 0;
};

struct GridConfig {
  std::vector<std::string> methods = {"tiled", "eager"};
  std::vector<int64_t> s_values = {512, 1024};
  std::vector<int64_t> d_values = {64, 128};
  std::vector<DType> dtypes = {DType::F32};
  std::vector<MaskKind> masks = {MaskKind::None, MaskKind::Causal};
  int64_t b = 1;
  int64_t h = 8;
  std::vector<TileSchedule> schedules = {TileSchedule{}};
  int n_warmup = 10;
  int n_timed = 50;
  uint64_t seed = 0;
  int threads = 0;             // kernel worker cap, 0 = auto
  std::string out_dir = "out";
};

void validate(const GridConfig& config);  // throws std::invalid_argument

// Known benchmark methods. The forced-backend probes from production stacks
// are registered as permanently unavailable here; their grid points surface
// as status=unsupported records with NaN metrics rather than dropped rows.
struct MethodDesc {
  std::string name;
  bool available = false;
  bool schedule_dependent = false;
};

const std::vector<MethodDesc>& method_registry();
const MethodDesc* find_method(const std::string& name);

// Runs one method on a workload. Unavailable methods must be filtered by the
// caller; unknown names throw std::invalid_argument.
std::vector<float> run_method(const std::string& name, const Workload& workload,
                              const TileSchedule& sched, PlanCache& cache,
                              int threads);

// Deterministic mask construction for a grid point. Padding uses
// valid_len[b] = max(1, 3S/4) so padded tails are exercised.
MaskSpec make_mask(MaskKind kind, const Shape& shape);

struct RunResult {
  std::vector<BenchRecord> records;  // exactly one per grid point
  RunManifest manifest;
};

// Iterates the full cross product (method-major, then schedule for
// schedule-dependent methods, then S, D, dtype, mask). Per point: correctness
// gate (directly for S <= 256, else on a down-scaled S=256 twin), then
// timing, then metric computation. Failures become status-annotated NaN
// records; no row is ever dropped.
RunResult run_grid(const GridConfig& config);

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "method,B,H,S,D,dtype,causal,t_m,t_n,stages,layout,median_ms,p95_ms,"
    "tokens_per_s,bw_proxy,status,status_detail";

// Lossless round-trip, NaN serialized as literal NaN. I/O errors and
// malformed rows throw std::runtime_error with path/line context.
void write_records(const std::vector<BenchRecord>& records,
                   const std::string& path);
std::vector<BenchRecord> read_records(const std::string& path);

void write_manifest(const RunManifest& manifest, const std::string& path);

RunManifest make_manifest(const GridConfig& config);

}  // namespace tileattn
