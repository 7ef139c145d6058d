#include "tileattn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "tileattn/analysis.hpp"

namespace tileattn {

namespace {

using nlohmann::json;

std::vector<MaskKind> masks_from_causal_mode(const std::string& mode) {
  if (mode == "on") return {MaskKind::Causal};
  if (mode == "off") return {MaskKind::None};
  if (mode == "both") return {MaskKind::None, MaskKind::Causal};
  throw std::invalid_argument("causal mode must be on, off or both: " + mode);
}

}  // namespace

GridConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  GridConfig cfg;
  try {
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("s")) cfg.s_values = j["s"].get<std::vector<int64_t>>();
    if (j.contains("d")) cfg.d_values = j["d"].get<std::vector<int64_t>>();
    if (j.contains("dtype")) {
      cfg.dtypes.clear();
      for (const auto& s : j["dtype"].get<std::vector<std::string>>())
        cfg.dtypes.push_back(dtype_from_string(s));
    }
    if (j.contains("causal"))
      cfg.masks = masks_from_causal_mode(j["causal"].get<std::string>());
    if (j.contains("b")) cfg.b = j["b"].get<int64_t>();
    if (j.contains("h")) cfg.h = j["h"].get<int64_t>();
    if (j.contains("schedules")) {
      cfg.schedules.clear();
      for (const auto& js : j["schedules"]) {
        TileSchedule s;
        if (js.contains("t_m")) s.t_m = js["t_m"].get<int>();
        if (js.contains("t_n")) s.t_n = js["t_n"].get<int>();
        if (js.contains("stages")) s.stages = js["stages"].get<int>();
        if (js.contains("layout"))
          s.layout = layout_from_string(js["layout"].get<std::string>());
        cfg.schedules.push_back(s);
      }
    }
    if (j.contains("n_warmup")) cfg.n_warmup = j["n_warmup"].get<int>();
    if (j.contains("n_timed")) cfg.n_timed = j["n_timed"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("config field error in " + path + ": " + e.what());
  }
  return cfg;
}

int cmd_check(const GridConfig& config) {
  validate(config);
  const std::vector<int64_t> check_s = {64, 128, 256};
  const std::vector<MaskKind> kinds = {MaskKind::None, MaskKind::Causal,
                                       MaskKind::Padding};
  PlanCache cache;
  int failures = 0;
  int cells = 0;
  for (const auto& name : config.methods) {
    const MethodDesc* method = find_method(name);
    if (!method->available) {
      std::printf("check %-8s : skipped (not available on this backend)\n",
                  name.c_str());
      continue;
    }
    const std::vector<TileSchedule> scheds =
        method->schedule_dependent ? config.schedules
                                   : std::vector<TileSchedule>{TileSchedule{}};
    for (const TileSchedule& sched : scheds) {
      for (DType dtype : config.dtypes) {
        for (MaskKind kind : kinds) {
          for (int64_t s : check_s) {
            for (int64_t d : config.d_values) {
              ++cells;
              const Shape shape{config.b, config.h, s, d};
              char cell[160];
              if (method->schedule_dependent)
                std::snprintf(cell, sizeof(cell),
                              "check %-8s %-4s %-7s S=%-4lld D=%-4lld "
                              "tm=%d tn=%d stages=%d layout=%s",
                              name.c_str(), std::string(to_string(dtype)).c_str(),
                              std::string(to_string(kind)).c_str(),
                              (long long)s, (long long)d, sched.t_m, sched.t_n,
                              sched.stages,
                              std::string(to_string(sched.layout)).c_str());
              else
                std::snprintf(cell, sizeof(cell),
                              "check %-8s %-4s %-7s S=%-4lld D=%-4lld",
                              name.c_str(), std::string(to_string(dtype)).c_str(),
                              std::string(to_string(kind)).c_str(),
                              (long long)s, (long long)d);
              try {
                Workload wl{make_input(shape, dtype, config.seed),
                            make_mask(kind, shape), ScaleSpec{}};
                const CheckResult res = check_correctness(
                    [&](const Workload& w) {
                      return run_method(name, w, sched, cache, config.threads);
                    },
                    wl, dtype);
                if (res.passed) {
                  std::printf("%s : PASS (max_abs=%.3g tol=%.3g)\n", cell,
                              res.max_abs_err, res.tol_used);
                } else {
                  std::printf("%s : FAIL (max_abs=%.3g tol=%.3g)\n", cell,
                              res.max_abs_err, res.tol_used);
                  ++failures;
                }
              } catch (const UnsupportedScheduleError& e) {
                std::printf("%s : SKIP (%s)\n", cell, e.what());
              }
            }
          }
        }
      }
    }
  }
  std::printf("check: %d/%d cells passed\n", cells - failures, cells);
  return failures == 0 ? kExitOk : kExitCheckFailed;
}

int cmd_bench(const GridConfig& config) {
  validate(config);
  std::filesystem::create_directories(config.out_dir);
  const RunResult result = run_grid(config);
  const std::string csv_path = config.out_dir + "/bench.csv";
  write_records(result.records, csv_path);
  write_manifest(result.manifest, config.out_dir + "/manifest.json");
  int ok = 0;
  for (const auto& r : result.records)
    if (r.status == BenchStatus::Ok) ++ok;
  std::printf("bench: %zu records (%d ok) -> %s\n", result.records.size(), ok,
              csv_path.c_str());
  return kExitOk;
}

int cmd_tune(const GridConfig& config) {
  GridConfig tune_cfg = config;
  tune_cfg.methods = {"tiled"};
  validate(tune_cfg);
  std::filesystem::create_directories(tune_cfg.out_dir);
  const RunResult result = run_grid(tune_cfg);
  write_records(result.records, tune_cfg.out_dir + "/tune.csv");
  write_manifest(result.manifest, tune_cfg.out_dir + "/manifest.json");

  const std::vector<SensitivityRow> rows = sensitivity(result.records);
  std::ofstream csv(tune_cfg.out_dir + "/sensitivity.csv", std::ios::trunc);
  if (!csv)
    throw std::runtime_error("cannot write " + tune_cfg.out_dir +
                             "/sensitivity.csv");
  csv << "regime,S,D,dtype,causal,best_t_m,best_t_n,best_stages,best_layout,"
         "runner_t_m,runner_t_n,runner_stages,runner_layout,drop_percent\n";
  std::printf("%-6s %-6s %-5s %-5s %-7s %-18s %-18s %s\n", "regime", "S", "D",
              "dtype", "causal", "best (tm,tn,st,lay)", "runner-up",
              "drop%%");
  for (const auto& r : rows) {
    csv << r.regime << ',' << r.s << ',' << r.d << ',' << to_string(r.dtype)
        << ',' << (r.causal ? 1 : 0) << ',' << r.best.t_m << ',' << r.best.t_n
        << ',' << r.best.stages << ',' << to_string(r.best.layout) << ','
        << r.runner_up.t_m << ',' << r.runner_up.t_n << ','
        << r.runner_up.stages << ',' << to_string(r.runner_up.layout) << ','
        << r.drop_percent << '\n';
    char best[32], runner[32];
    std::snprintf(best, sizeof(best), "(%d,%d,%d,%s)", r.best.t_m, r.best.t_n,
                  r.best.stages, std::string(to_string(r.best.layout)).c_str());
    std::snprintf(runner, sizeof(runner), "(%d,%d,%d,%s)", r.runner_up.t_m,
                  r.runner_up.t_n, r.runner_up.stages,
                  std::string(to_string(r.runner_up.layout)).c_str());
    std::printf("%-6s %-6lld %-5lld %-5s %-7d %-18s %-18s %.2f\n",
                r.regime.c_str(), (long long)r.s, (long long)r.d,
                std::string(to_string(r.dtype)).c_str(), r.causal ? 1 : 0,
                best, runner, r.drop_percent);
  }
  std::printf("tune: %zu records, %zu sensitivity rows -> %s\n",
              result.records.size(), rows.size(), tune_cfg.out_dir.c_str());
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& csv_paths,
               const std::string& out_dir, const std::string& method,
               const std::string& baseline) {
  if (csv_paths.empty())
    throw std::invalid_argument("report: at least one CSV path required");
  std::vector<BenchRecord> records;
  for (const auto& path : csv_paths) {
    auto part = read_records(path);
    records.insert(records.end(), part.begin(), part.end());
  }
  std::filesystem::create_directories(out_dir);
  emit_plots(records, out_dir, method, baseline);

  // Aggregate ratio table (mean / median / wins) of every method against the
  // baseline, in registry order.
  std::ofstream csv(out_dir + "/aggregate.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + out_dir + "/aggregate.csv");
  csv << "comparison,mean_ratio,median_ratio,wins,total\n";
  std::printf("%-24s %-12s %-12s %s\n", "comparison", "mean ratio",
              "median ratio", "win count");
  for (const auto& desc : method_registry()) {
    if (desc.name == baseline) continue;
    bool present = false;
    for (const auto& r : records) present |= r.method == desc.name;
    if (!present) continue;
    const RatioAggregate agg = aggregate_ratios(records, desc.name, baseline);
    csv << desc.name << "/" << baseline << ',' << agg.mean_ratio << ','
        << agg.median_ratio << ',' << agg.wins << ',' << agg.total << '\n';
    std::printf("%-24s %-12.4g %-12.4g %d / %d\n",
                (desc.name + "/" + baseline).c_str(), agg.mean_ratio,
                agg.median_ratio, agg.wins, agg.total);
  }
  std::printf("report: wrote plots and aggregates to %s\n", out_dir.c_str());
  return kExitOk;
}

}  // namespace tileattn
