#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tileattn/commands.hpp"

namespace {

using tileattn::GridConfig;

struct FlagOverrides {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> methods;
  std::vector<int64_t> s_values, d_values;
  std::vector<std::string> dtypes;
  std::string causal_mode;
  std::vector<int> tm, tn, stages;
  std::vector<std::string> layouts;
  int64_t seed = -1;
  int nw = -1, nr = -1;
};

void add_common_flags(CLI::App* cmd, FlagOverrides& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "workload generator seed");
  cmd->add_option("--methods", f.methods, "methods to run")->delimiter(',');
  cmd->add_option("--s", f.s_values, "sequence lengths")->delimiter(',');
  cmd->add_option("--d", f.d_values, "head dimensions")->delimiter(',');
  cmd->add_option("--dtype", f.dtypes, "dtypes: f32,f16,bf16")->delimiter(',');
  cmd->add_option("--causal", f.causal_mode, "causal masking: on|off|both");
  cmd->add_option("--nw", f.nw, "warmup iterations");
  cmd->add_option("--nr", f.nr, "timed iterations");
  cmd->add_option("--tm", f.tm, "query tile rows T_M")->delimiter(',');
  cmd->add_option("--tn", f.tn, "key/value tile columns T_N")->delimiter(',');
  cmd->add_option("--stages", f.stages, "K/V lookahead stages")->delimiter(',');
  cmd->add_option("--layout", f.layouts, "tile packing: row|col")->delimiter(',');
}

// Config file first, then flags win over the file.
GridConfig resolve_config(const FlagOverrides& f) {
  GridConfig cfg;
  if (!f.config_path.empty()) cfg = tileattn::load_config_file(f.config_path);
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.methods.empty()) cfg.methods = f.methods;
  if (!f.s_values.empty()) cfg.s_values = f.s_values;
  if (!f.d_values.empty()) cfg.d_values = f.d_values;
  if (!f.dtypes.empty()) {
    cfg.dtypes.clear();
    for (const auto& s : f.dtypes) cfg.dtypes.push_back(tileattn::dtype_from_string(s));
  }
  if (!f.causal_mode.empty()) {
    if (f.causal_mode == "on") cfg.masks = {tileattn::MaskKind::Causal};
    else if (f.causal_mode == "off") cfg.masks = {tileattn::MaskKind::None};
    else if (f.causal_mode == "both")
      cfg.masks = {tileattn::MaskKind::None, tileattn::MaskKind::Causal};
    else throw std::invalid_argument("--causal must be on, off or both");
  }
  if (f.seed >= 0) cfg.seed = uint64_t(f.seed);
  if (f.nw > 0) cfg.n_warmup = f.nw;
  if (f.nr > 0) cfg.n_timed = f.nr;
  if (!f.tm.empty() || !f.tn.empty() || !f.stages.empty() || !f.layouts.empty()) {
    std::vector<int> tms = f.tm;
    std::vector<int> tns = f.tn;
    std::vector<int> sts = f.stages;
    std::vector<tileattn::TileLayout> lays;
    for (const auto& l : f.layouts) lays.push_back(tileattn::layout_from_string(l));
    if (tms.empty()) tms = {cfg.schedules.front().t_m};
    if (tns.empty()) tns = {cfg.schedules.front().t_n};
    if (sts.empty()) sts = {cfg.schedules.front().stages};
    if (lays.empty()) lays = {cfg.schedules.front().layout};
    cfg.schedules.clear();
    for (int tm : tms)
      for (int tn : tns)
        for (int st : sts)
          for (auto lay : lays)
            cfg.schedules.push_back(tileattn::TileSchedule{tm, tn, st, lay});
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tileattn: tiled online-softmax SDPA kernel with a "
               "benchmark, tuning and reporting workflow"};
  app.require_subcommand(1);

  FlagOverrides check_f, bench_f, tune_f;
  CLI::App* check = app.add_subcommand("check", "correctness gate vs the reference");
  add_common_flags(check, check_f);
  CLI::App* bench = app.add_subcommand("bench", "grid sweep -> CSV + manifest");
  add_common_flags(bench, bench_f);
  CLI::App* tune = app.add_subcommand("tune", "schedule sweep + sensitivity table");
  add_common_flags(tune, tune_f);

  std::vector<std::string> report_csvs;
  std::string report_out = "out";
  std::string report_method = "tiled";
  std::string report_baseline = "eager";
  CLI::App* report = app.add_subcommand("report", "plots + summary tables from CSVs");
  report->add_option("csv", report_csvs, "input record CSVs")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--method", report_method, "regime-map numerator method");
  report->add_option("--baseline", report_baseline, "ratio/regime baseline method");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? tileattn::kExitOk : tileattn::kExitConfigError;
  }

  try {
    if (check->parsed()) return tileattn::cmd_check(resolve_config(check_f));
    if (bench->parsed()) return tileattn::cmd_bench(resolve_config(bench_f));
    if (tune->parsed()) return tileattn::cmd_tune(resolve_config(tune_f));
    if (report->parsed())
      return tileattn::cmd_report(report_csvs, report_out, report_method,
                                  report_baseline);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return tileattn::kExitConfigError;
  } catch (const tileattn::UnsupportedScheduleError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return tileattn::kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return tileattn::kExitIoError;
  }
  return tileattn::kExitConfigError;
}
