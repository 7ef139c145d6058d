#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "tileattn/bench.hpp"
#include "tileattn/reference.hpp"

using namespace tileattn;

TEST_CASE("quantiles: median and nearest-rank p95") {
  CHECK(quantiles({1, 2, 3, 4, 5}) == std::pair{3.0, 5.0});
  CHECK(quantiles({3, 1}).first == 2.0);
  std::vector<double> constant(100, 7.25);
  CHECK(quantiles(constant) == std::pair{7.25, 7.25});
  // n=20: ceil(0.95*20) = 19, not 20
  std::vector<double> twenty(20);
  for (int i = 0; i < 20; ++i) twenty[size_t(i)] = double(i + 1);
  CHECK(quantiles(twenty).second == 19.0);
  CHECK_THROWS_AS(quantiles({}), std::invalid_argument);
}

TEST_CASE("quantiles are permutation invariant") {
  std::mt19937_64 rng(5);
  std::vector<double> samples(37);
  std::normal_distribution<double> dist(10.0, 2.0);
  for (auto& s : samples) s = dist(rng);
  const auto want = quantiles(samples);
  for (int shuffle = 0; shuffle < 100; ++shuffle) {
    std::shuffle(samples.begin(), samples.end(), rng);
    CHECK(quantiles(samples) == want);
  }
}

TEST_CASE("time_method measures a busy-wait stub") {
  auto busy_5ms = [] {
    const auto t0 = std::chrono::steady_clock::now();
    while (std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
               .count() < 5.0) {
    }
  };
  const TimingStats stats = time_method(busy_5ms, 1, 5);
  CHECK(stats.samples_ms.size() == 5);
  CHECK(stats.median_ms >= 4.5);
  CHECK(stats.median_ms <= 25.0);  // generous upper bound for scheduler noise
  CHECK(stats.p95_ms >= stats.median_ms);
}

TEST_CASE("time_method enforces iteration minimums") {
  auto noop = [] {};
  CHECK_NOTHROW((void)time_method(noop, 1, 3));
  CHECK_THROWS_AS((void)time_method(noop, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS((void)time_method(noop, 0, 3), std::invalid_argument);
}

TEST_CASE("plan-cache constructions happen during warmup only") {
  PlanCache cache;
  const Shape sh{1, 1, 64, 16};
  Workload wl{make_input(sh, DType::F32, 1), MaskSpec::none(), ScaleSpec{}};
  const TileSchedule sched{32, 32, 1, TileLayout::RowPacked};
  (void)time_method(
      [&] { (void)run_method("tiled", wl, sched, cache, 1); }, 3, 4);
  CHECK(cache.constructions() == 1);  // first warmup call only
  CHECK(cache.hits() == 6);
}

TEST_CASE("check_correctness gates the real kernels") {
  PlanCache cache;
  const Shape sh{1, 2, 128, 32};
  Workload wl{make_input(sh, DType::F32, 3), MaskSpec::causal(), ScaleSpec{}};
  const TileSchedule sched{64, 64, 2, TileLayout::RowPacked};

  const CheckResult tiled_res = check_correctness(
      [&](const Workload& w) { return run_method("tiled", w, sched, cache, 0); },
      wl, DType::F32);
  CHECK(tiled_res.passed);
  CHECK(tiled_res.tol_used == 1e-4);

  const CheckResult eager_res = check_correctness(
      [&](const Workload& w) { return run_method("eager", w, sched, cache, 0); },
      wl, DType::F32);
  CHECK(eager_res.passed);
}

TEST_CASE("a corrupted kernel fails the gate loudly") {
  PlanCache cache;
  const Shape sh{1, 1, 128, 32};
  Workload wl{make_input(sh, DType::F32, 3), MaskSpec::none(), ScaleSpec{}};
  // fault injection: drop the contribution of the last K/V tile by zeroing
  // the trailing output rows the way a skipped-tile bug would
  auto corrupted = [&](const Workload& w) {
    auto out = run_method("tiled", w, TileSchedule{64, 64, 2, TileLayout::RowPacked},
                          cache, 0);
    for (size_t i = out.size() - 64; i < out.size(); ++i) out[i] = 0.0f;
    return out;
  };
  const CheckResult res = check_correctness(corrupted, wl, DType::F32);
  CHECK(!res.passed);
  CHECK(res.max_abs_err > 100 * res.tol_used);
}

TEST_CASE("NaN in a method output fails the gate") {
  PlanCache cache;
  const Shape sh{1, 1, 32, 8};
  Workload wl{make_input(sh, DType::F32, 3), MaskSpec::none(), ScaleSpec{}};
  auto poisoned = [&](const Workload& w) {
    auto out = run_method("eager", w, TileSchedule{}, cache, 0);
    out[5] = std::numeric_limits<float>::quiet_NaN();
    return out;
  };
  const CheckResult res = check_correctness(poisoned, wl, DType::F32);
  CHECK(!res.passed);
  CHECK(std::isinf(res.max_abs_err));
}

TEST_CASE("check_correctness rejects oversized shapes") {
  PlanCache cache;
  const Shape sh{1, 1, 300, 8};
  Workload wl{make_input(sh, DType::F32, 3), MaskSpec::none(), ScaleSpec{}};
  CHECK_THROWS_AS(
      (void)check_correctness(
          [&](const Workload& w) {
            return run_method("eager", w, TileSchedule{}, cache, 0);
          },
          wl, DType::F32),
      std::invalid_argument);
}

namespace {

GridConfig tiny_config() {
  GridConfig cfg;
  cfg.methods = {"tiled", "eager"};
  cfg.s_values = {32, 64};
  cfg.d_values = {16};
  cfg.dtypes = {DType::F32};
  cfg.masks = {MaskKind::None, MaskKind::Causal};
  cfg.b = 1;
  cfg.h = 1;
  cfg.schedules = {TileSchedule{16, 16, 1, TileLayout::RowPacked}};
  cfg.n_warmup = 1;
  cfg.n_timed = 3;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST_CASE("run_grid emits exactly one record per grid point") {
  const RunResult res = run_grid(tiny_config());
  CHECK(res.records.size() == 8);  // 2 methods x 2 S x 1 D x 1 dtype x 2 masks
  for (const auto& r : res.records) {
    CHECK(r.status == BenchStatus::Ok);
    CHECK(r.median_ms > 0.0);
    CHECK(r.tokens_per_s > 0.0);
    CHECK(r.bw_proxy > 0.0);
    CHECK(std::isfinite(r.p95_ms));
  }
  CHECK(res.manifest.n_warmup == 1);
  CHECK(res.manifest.seed == 9);
  CHECK(!res.manifest.hardware.empty());
}

TEST_CASE("unavailable methods become unsupported NaN records") {
  GridConfig cfg = tiny_config();
  cfg.methods = {"flash2"};
  const RunResult res = run_grid(cfg);
  CHECK(res.records.size() == 4);
  for (const auto& r : res.records) {
    CHECK(r.status == BenchStatus::Unsupported);
    CHECK(!r.status_detail.empty());
    CHECK(std::isnan(r.median_ms));
    CHECK(std::isnan(r.p95_ms));
    CHECK(std::isnan(r.tokens_per_s));
    CHECK(std::isnan(r.bw_proxy));
  }
}

TEST_CASE("unsupported schedules surface as status rows, not crashes") {
  GridConfig cfg = tiny_config();
  cfg.methods = {"tiled"};
  cfg.schedules = {TileSchedule{16, 16, 1, TileLayout::RowPacked},
                   TileSchedule{16, 16, 9, TileLayout::RowPacked}};
  const RunResult res = run_grid(cfg);
  CHECK(res.records.size() == 8);
  int unsupported = 0;
  for (const auto& r : res.records)
    if (r.status == BenchStatus::Unsupported) ++unsupported;
  CHECK(unsupported == 4);
}

TEST_CASE("re-running a grid reproduces outcomes and ordering") {
  const RunResult a = run_grid(tiny_config());
  const RunResult b = run_grid(tiny_config());
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].method == b.records[i].method);
    CHECK(a.records[i].s == b.records[i].s);
    CHECK(a.records[i].causal == b.records[i].causal);
    CHECK(a.records[i].status == b.records[i].status);
  }
}

TEST_CASE("grid config validation") {
  GridConfig cfg = tiny_config();
  cfg.methods = {"warp9"};
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.masks = {MaskKind::Padding};
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.n_timed = 2;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
  cfg = tiny_config();
  cfg.s_values.clear();
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("records survive a CSV round-trip, NaN included") {
  RunResult res = run_grid(tiny_config());
  // add a synthetic oom record to cover the NaN path
  BenchRecord oom;
  oom.method = "eager";
  oom.b = 1;
  oom.h = 1;
  oom.s = 65536;
  oom.d = 128;
  oom.dtype = DType::BF16Emu;
  oom.causal = true;
  oom.median_ms = oom.p95_ms = oom.tokens_per_s = oom.bw_proxy =
      std::numeric_limits<double>::quiet_NaN();
  oom.status = BenchStatus::Oom;
  oom.status_detail = "allocation failure, with a comma";
  res.records.push_back(oom);

  const std::string path = "bench_roundtrip_test.csv";
  write_records(res.records, path);
  const std::vector<BenchRecord> back = read_records(path);
  REQUIRE(back.size() == res.records.size());
  for (size_t i = 0; i < back.size(); ++i) {
    const BenchRecord& x = res.records[i];
    const BenchRecord& y = back[i];
    CHECK(x.method == y.method);
    CHECK(x.b == y.b);
    CHECK(x.h == y.h);
    CHECK(x.s == y.s);
    CHECK(x.d == y.d);
    CHECK(x.dtype == y.dtype);
    CHECK(x.causal == y.causal);
    CHECK(x.schedule.has_value() == y.schedule.has_value());
    if (x.schedule) CHECK(*x.schedule == *y.schedule);
    CHECK((x.median_ms == y.median_ms ||
           (std::isnan(x.median_ms) && std::isnan(y.median_ms))));
    CHECK((x.tokens_per_s == y.tokens_per_s ||
           (std::isnan(x.tokens_per_s) && std::isnan(y.tokens_per_s))));
    CHECK((x.bw_proxy == y.bw_proxy ||
           (std::isnan(x.bw_proxy) && std::isnan(y.bw_proxy))));
    CHECK(x.status == y.status);
    CHECK(x.status_detail == y.status_detail);
  }
  std::filesystem::remove(path);
}

TEST_CASE("malformed CSV rows report their line number") {
  const std::string path = "bench_malformed_test.csv";
  {
    std::ofstream out(path);
    out << kCsvHeader << '\n';
    out << "eager,1,1,32,16,f32,0,,,,,1.0,1.5,32000,8192000,ok,\n";
    out << "this,is,not,a,valid,row\n";
  }
  try {
    (void)read_records(path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("manifest JSON has the checklist fields") {
  const RunManifest m = make_manifest(tiny_config());
  const std::string path = "manifest_test.json";
  write_manifest(m, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  for (const char* key : {"hardware", "artifact_version", "clock_source",
                          "n_warmup", "n_timed", "seed", "date", "timing"})
    CHECK(text.find(key) != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("method registry knows the probe backends") {
  CHECK(find_method("tiled")->available);
  CHECK(find_method("tiled")->schedule_dependent);
  CHECK(find_method("eager")->available);
  CHECK(!find_method("eager")->schedule_dependent);
  for (const char* probe : {"flash2", "efficient", "cudnn"}) {
    REQUIRE(find_method(probe) != nullptr);
    CHECK(!find_method(probe)->available);
  }
  CHECK(find_method("nope") == nullptr);
}
