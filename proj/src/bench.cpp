#include "tileattn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tileattn/analysis.hpp"
#include "tileattn/reference.hpp"

namespace tileattn {

std::pair<double, double> quantiles(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("quantiles: empty sample list");
  std::vector<double> sorted(samples);
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  double median;
  if (n % 2 == 1)
    median = sorted[n / 2];
  else
    median = 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  // nearest-rank ceil(0.95*n), in integer arithmetic
  const size_t rank = (19 * n + 19) / 20;
  const double p95 = sorted[rank - 1];
  return {median, p95};
}

TimingStats time_method(const std::function<void()>& call, int n_warmup,
                        int n_timed) {
  if (n_warmup < 1) throw std::invalid_argument("time_method: n_warmup must be >= 1");
  if (n_timed < 3) throw std::invalid_argument("time_method: n_timed must be >= 3");
  using clock = std::chrono::steady_clock;
  TimingStats stats;
  stats.n_warmup = n_warmup;
  stats.n_timed = n_timed;
  for (int i = 0; i < n_warmup; ++i) call();
  stats.samples_ms.reserve(size_t(n_timed));
  for (int i = 0; i < n_timed; ++i) {
    const auto t0 = clock::now();
    call();
    const auto t1 = clock::now();
    stats.samples_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::tie(stats.median_ms, stats.p95_ms) = quantiles(stats.samples_ms);
  return stats;
}

double check_tolerance(DType dt) {
  switch (dt) {
    case DType::F32: return 1e-4;
    case DType::F16Emu: return 5e-3;
    case DType::BF16Emu: return 2e-2;
  }
  return 1e-4;
}

CheckResult check_correctness(
    const std::function<std::vector<float>(const Workload&)>& method,
    const Workload& workload, DType dtype) {
  if (workload.input.shape.s > 256)
    throw std::invalid_argument("check_correctness: S must be <= 256");
  const std::vector<float> got = method(workload);
  const RefOutput ref =
      sdpa_reference(workload.input, workload.mask, workload.scale);
  if (got.size() != ref.o.size())
    throw std::invalid_argument("check_correctness: output size mismatch");
  CheckResult res;
  res.tol_used = check_tolerance(dtype);
  for (size_t i = 0; i < got.size(); ++i) {
    const double diff = std::abs(double(got[i]) - ref.o[i]);
    if (std::isnan(diff)) {
      // NaN in the kernel output must fail loudly, not vanish in max().
      res.max_abs_err = std::numeric_limits<double>::infinity();
      res.max_rel_err = std::numeric_limits<double>::infinity();
      break;
    }
    res.max_abs_err = std::max(res.max_abs_err, diff);
    res.max_rel_err =
        std::max(res.max_rel_err, diff / std::max(1e-12, std::abs(ref.o[i])));
  }
  res.passed = res.max_abs_err <= res.tol_used;
  return res;
}

std::string_view to_string(BenchStatus s) {
  switch (s) {
    case BenchStatus::Ok: return "ok";
    case BenchStatus::Unsupported: return "unsupported";
    case BenchStatus::Oom: return "oom";
    case BenchStatus::CheckFailed: return "check_failed";
  }
  return "ok";
}

BenchStatus bench_status_from_string(std::string_view s) {
  if (s == "ok") return BenchStatus::Ok;
  if (s == "unsupported") return BenchStatus::Unsupported;
  if (s == "oom") return BenchStatus::Oom;
  if (s == "check_failed") return BenchStatus::CheckFailed;
  throw std::invalid_argument("unknown status: " + std::string(s));
}

const std::vector<MethodDesc>& method_registry() {
  static const std::vector<MethodDesc> registry = {
      {"tiled", true, true},
      {"eager", true, false},
      // Forced-backend probes; not runnable on this backend, kept so sweeps
      // emit status=unsupported rows instead of silently dropping them.
      {"flash2", false, false},
      {"efficient", false, false},
      {"cudnn", false, false},
  };
  return registry;
}

const MethodDesc* find_method(const std::string& name) {
  for (const auto& m : method_registry())
    if (m.name == name) return &m;
  return nullptr;
}

std::vector<float> run_method(const std::string& name, const Workload& workload,
                              const TileSchedule& sched, PlanCache& cache,
                              int threads) {
  if (name == "tiled") {
    TiledOptions opt;
    opt.threads = threads;
    return sdpa_tiled(workload.input, workload.mask, workload.scale, sched,
                      cache, opt);
  }
  if (name == "eager")
    return sdpa_eager_baseline(workload.input, workload.mask, workload.scale);
  throw std::invalid_argument("run_method: no runnable method named " + name);
}

MaskSpec make_mask(MaskKind kind, const Shape& shape) {
  switch (kind) {
    case MaskKind::None: return MaskSpec::none();
    case MaskKind::Causal: return MaskSpec::causal();
    case MaskKind::Padding: {
      std::vector<int64_t> lens(size_t(shape.b),
                                std::max<int64_t>(1, 3 * shape.s / 4));
      return MaskSpec::padding(std::move(lens));
    }
  }
  return MaskSpec::none();
}

void validate(const GridConfig& config) {
  if (config.methods.empty() || config.s_values.empty() ||
      config.d_values.empty() || config.dtypes.empty() || config.masks.empty())
    throw std::invalid_argument("grid config: all axis lists must be non-empty");
  if (config.schedules.empty())
    throw std::invalid_argument("grid config: schedule set must be non-empty");
  if (config.b < 1 || config.h < 1)
    throw std::invalid_argument("grid config: B and H must be >= 1");
  for (int64_t s : config.s_values)
    if (s < 1) throw std::invalid_argument("grid config: S values must be >= 1");
  for (int64_t d : config.d_values)
    if (d < 1) throw std::invalid_argument("grid config: D values must be >= 1");
  for (const auto& m : config.methods)
    if (!find_method(m))
      throw std::invalid_argument("grid config: unknown method " + m);
  for (MaskKind k : config.masks)
    if (k == MaskKind::Padding)
      throw std::invalid_argument(
          "grid config: padding masks are a correctness-check axis, not a "
          "bench grid axis");
  if (config.n_warmup < 1)
    throw std::invalid_argument("grid config: n_warmup must be >= 1");
  if (config.n_timed < 3)
    throw std::invalid_argument("grid config: n_timed must be >= 3");
}

namespace {

std::string hardware_string() {
  std::string model = "unknown-cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) {
        model = line.substr(pos + 1);
        while (!model.empty() && model.front() == ' ') model.erase(model.begin());
      }
      break;
    }
  }
  return model + " (" + std::to_string(std::thread::hardware_concurrency()) +
         " hw threads)";
}

std::string iso_date_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void mark_failed(BenchRecord& rec, BenchStatus status, std::string detail) {
  rec.status = status;
  rec.status_detail = std::move(detail);
  rec.median_ms = rec.p95_ms = rec.tokens_per_s = rec.bw_proxy = kNaN;
}

}  // namespace

RunManifest make_manifest(const GridConfig& config) {
  RunManifest m;
  m.hardware = hardware_string();
  m.artifact_version = "tileattn 0.1.0";
  m.clock_source = "std::chrono::steady_clock";
  m.date = iso_date_now();
  m.n_warmup = config.n_warmup;
  m.n_timed = config.n_timed;
  m.seed = config.seed;
  return m;
}

RunResult run_grid(const GridConfig& config) {
  validate(config);
  RunResult result;
  result.manifest = make_manifest(config);
  PlanCache cache;

  for (const auto& method_name : config.methods) {
    const MethodDesc* method = find_method(method_name);
    const std::vector<TileSchedule> scheds =
        method->schedule_dependent ? config.schedules
                                   : std::vector<TileSchedule>{TileSchedule{}};
    for (const TileSchedule& sched : scheds) {
      for (int64_t s : config.s_values) {
        for (int64_t d : config.d_values) {
          for (DType dtype : config.dtypes) {
            for (MaskKind kind : config.masks) {
              BenchRecord rec;
              rec.method = method_name;
              rec.b = config.b;
              rec.h = config.h;
              rec.s = s;
              rec.d = d;
              rec.dtype = dtype;
              rec.causal = kind == MaskKind::Causal;
              if (method->schedule_dependent) rec.schedule = sched;

              if (!method->available) {
                mark_failed(rec, BenchStatus::Unsupported,
                            "method not available on this backend");
                result.records.push_back(std::move(rec));
                continue;
              }

              auto runner = [&](const Workload& wl) {
                return run_method(method_name, wl, sched, cache, config.threads);
              };

              // Correctness gate; for S > 256 run a down-scaled twin shape.
              const int64_t twin_s = std::min<int64_t>(s, 256);
              bool gated = false;
              try {
                const Shape twin_shape{config.b, config.h, twin_s, d};
                Workload twin{make_input(twin_shape, dtype, config.seed),
                              make_mask(kind, twin_shape), ScaleSpec{}};
                const CheckResult check =
                    check_correctness(runner, twin, dtype);
                if (!check.passed) {
                  char buf[128];
                  std::snprintf(buf, sizeof(buf),
                                "max_abs_err=%.6g exceeds tol=%.6g (twin S=%lld)",
                                check.max_abs_err, check.tol_used,
                                (long long)twin_s);
                  mark_failed(rec, BenchStatus::CheckFailed, buf);
                  gated = true;
                }
              } catch (const UnsupportedScheduleError& e) {
                mark_failed(rec, BenchStatus::Unsupported, e.what());
                gated = true;
              } catch (const std::bad_alloc&) {
                mark_failed(rec, BenchStatus::Oom,
                            "allocation failure during correctness gate");
                gated = true;
              }
              if (gated) {
                result.records.push_back(std::move(rec));
                continue;
              }

              try {
                const Shape shape{config.b, config.h, s, d};
                Workload wl{make_input(shape, dtype, config.seed),
                            make_mask(kind, shape), ScaleSpec{}};
                const TimingStats stats = time_method(
                    [&] { (void)runner(wl); }, config.n_warmup, config.n_timed);
                rec.median_ms = stats.median_ms;
                rec.p95_ms = stats.p95_ms;
                rec.tokens_per_s =
                    tokens_per_second(config.b, config.h, s, stats.median_ms);
                rec.bw_proxy = bandwidth_proxy(config.b, config.h, s, d,
                                               bytes_per_elem(dtype),
                                               stats.median_ms);
                rec.status = BenchStatus::Ok;
              } catch (const UnsupportedScheduleError& e) {
                mark_failed(rec, BenchStatus::Unsupported, e.what());
              } catch (const std::bad_alloc&) {
                mark_failed(rec, BenchStatus::Oom,
                            "allocation failure while timing");
              }
              result.records.push_back(std::move(rec));
            }
          }
        }
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// Splits one CSV line honoring double-quote escapes.
std::vector<std::string> csv_split(const std::string& line, size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted)
    throw std::runtime_error("csv: unterminated quote at line " +
                             std::to_string(line_no));
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s, size_t line_no) {
  if (s == "NaN") return kNaN;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("csv: bad numeric field '" + s + "' at line " +
                             std::to_string(line_no));
  return v;
}

int64_t parse_int(const std::string& s, size_t line_no) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("csv: bad integer field '" + s + "' at line " +
                             std::to_string(line_no));
  return v;
}

}  // namespace

void write_records(const std::vector<BenchRecord>& records,
                   const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << csv_quote(r.method) << ',' << r.b << ',' << r.h << ',' << r.s << ','
        << r.d << ',' << to_string(r.dtype) << ',' << (r.causal ? 1 : 0) << ',';
    if (r.schedule) {
      out << r.schedule->t_m << ',' << r.schedule->t_n << ','
          << r.schedule->stages << ',' << to_string(r.schedule->layout);
    } else {
      out << ",,,";
    }
    out << ',' << fmt_double(r.median_ms) << ',' << fmt_double(r.p95_ms) << ','
        << fmt_double(r.tokens_per_s) << ',' << fmt_double(r.bw_proxy) << ','
        << to_string(r.status) << ',' << csv_quote(r.status_detail) << '\n';
  }
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

std::vector<BenchRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  std::string line;
  size_t line_no = 0;
  if (!std::getline(in, line))
    throw std::runtime_error("csv: empty file: " + path);
  ++line_no;
  if (line != kCsvHeader)
    throw std::runtime_error("csv: unexpected header at line 1 in " + path);
  std::vector<BenchRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv_split(line, line_no);
    if (f.size() != 17)
      throw std::runtime_error("csv: expected 17 fields, got " +
                               std::to_string(f.size()) + " at line " +
                               std::to_string(line_no) + " in " + path);
    BenchRecord r;
    r.method = f[0];
    r.b = parse_int(f[1], line_no);
    r.h = parse_int(f[2], line_no);
    r.s = parse_int(f[3], line_no);
    r.d = parse_int(f[4], line_no);
    r.dtype = dtype_from_string(f[5]);
    r.causal = parse_int(f[6], line_no) != 0;
    const bool has_sched = !f[7].empty() || !f[8].empty() || !f[9].empty() ||
                           !f[10].empty();
    if (has_sched) {
      TileSchedule s;
      s.t_m = int(parse_int(f[7], line_no));
      s.t_n = int(parse_int(f[8], line_no));
      s.stages = int(parse_int(f[9], line_no));
      s.layout = layout_from_string(f[10]);
      r.schedule = s;
    }
    r.median_ms = parse_double(f[11], line_no);
    r.p95_ms = parse_double(f[12], line_no);
    r.tokens_per_s = parse_double(f[13], line_no);
    r.bw_proxy = parse_double(f[14], line_no);
    r.status = bench_status_from_string(f[15]);
    r.status_detail = f[16];
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "{\n"
      << "  \"hardware\": \"" << manifest.hardware << "\",\n"
      << "  \"artifact_version\": \"" << manifest.artifact_version << "\",\n"
      << "  \"clock_source\": \"" << manifest.clock_source << "\",\n"
      << "  \"timing\": \"median + p95 over n_timed runs\",\n"
      << "  \"n_warmup\": " << manifest.n_warmup << ",\n"
      << "  \"n_timed\": " << manifest.n_timed << ",\n"
      << "  \"seed\": " << manifest.seed << ",\n"
      << "  \"date\": \"" << manifest.date << "\"\n"
      << "}\n";
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

}  // namespace tileattn
