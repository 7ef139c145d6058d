#include "tileattn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace tileattn {

double tokens_per_second(int64_t b, int64_t h, int64_t s, double t_fwd_ms) {
  if (!(t_fwd_ms > 0.0))
    throw std::invalid_argument("tokens_per_second: t_fwd must be > 0");
  return double(b) * double(h) * double(s) / (t_fwd_ms / 1000.0);
}

double bandwidth_proxy(int64_t b, int64_t h, int64_t s, int64_t d,
                       int bytes_per_elem, double t_fwd_ms) {
  if (!(t_fwd_ms > 0.0))
    throw std::invalid_argument("bandwidth_proxy: t_fwd must be > 0");
  return 4.0 * double(b) * double(h) * double(s) * double(d) *
         double(bytes_per_elem) / (t_fwd_ms / 1000.0);
}

double flop_rate(int64_t b, int64_t h, int64_t s, int64_t d, double t_fwd_ms) {
  if (!(t_fwd_ms > 0.0))
    throw std::invalid_argument("flop_rate: t_fwd must be > 0");
  return 4.0 * double(b) * double(h) * double(s) * double(s) * double(d) /
         (t_fwd_ms / 1000.0);
}

std::vector<double> normalize_bw(std::span<const double> values) {
  double max = -std::numeric_limits<double>::infinity();
  for (double v : values)
    if (std::isfinite(v) && v > max) max = v;
  if (!std::isfinite(max))
    throw std::invalid_argument("normalize_bw: no finite value in panel");
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out) v /= max;  // max/max == 1.0 exactly; NaN stays NaN
  return out;
}

namespace {

using PointKey = std::tuple<int64_t, int64_t, int64_t, int64_t, int, bool>;

PointKey point_key(const BenchRecord& r) {
  return {r.b, r.h, r.s, r.d, int(r.dtype), r.causal};
}

// First baseline record per point wins.
std::map<PointKey, double> baseline_tokens(const std::vector<BenchRecord>& records,
                                           const std::string& baseline) {
  std::map<PointKey, double> out;
  for (const auto& r : records)
    if (r.method == baseline) out.emplace(point_key(r), r.tokens_per_s);
  return out;
}

}  // namespace

std::vector<RegimeCell> regime_map(const std::vector<BenchRecord>& records,
                                   const std::string& method,
                                   const std::string& baseline) {
  const auto base = baseline_tokens(records, baseline);
  struct CellAcc {
    double sum = 0.0;
    int n = 0;
    bool nan = false;
  };
  std::map<std::pair<int64_t, int64_t>, CellAcc> cells;
  for (const auto& r : records) {
    if (r.method != method) continue;
    const auto it = base.find(point_key(r));
    if (it == base.end()) continue;
    const double percent = 100.0 * (r.tokens_per_s / it->second);
    auto& acc = cells[{r.s, r.d}];
    if (std::isnan(percent)) {
      acc.nan = true;
    } else {
      acc.sum += percent;
      acc.n += 1;
    }
  }
  std::vector<RegimeCell> out;
  out.reserve(cells.size());
  for (const auto& [sd, acc] : cells) {
    RegimeCell cell{sd.first, sd.second,
                    std::numeric_limits<double>::quiet_NaN()};
    if (!acc.nan && acc.n > 0) cell.percent = acc.sum / acc.n;
    out.push_back(cell);
  }
  return out;
}

RatioAggregate aggregate_ratios(const std::vector<BenchRecord>& records,
                                const std::string& method,
                                const std::string& baseline) {
  const auto base = baseline_tokens(records, baseline);
  std::vector<double> ratios;
  for (const auto& r : records) {
    if (r.method != method) continue;
    const auto it = base.find(point_key(r));
    if (it == base.end()) continue;
    const double ratio = r.tokens_per_s / it->second;
    if (std::isfinite(ratio)) ratios.push_back(ratio);
  }
  RatioAggregate agg;
  agg.total = int(ratios.size());
  if (ratios.empty()) {
    agg.mean_ratio = std::numeric_limits<double>::quiet_NaN();
    agg.median_ratio = std::numeric_limits<double>::quiet_NaN();
    return agg;
  }
  double sum = 0.0;
  for (double r : ratios) {
    sum += r;
    if (r > 1.0) ++agg.wins;
  }
  agg.mean_ratio = sum / double(ratios.size());
  std::sort(ratios.begin(), ratios.end());
  const size_t n = ratios.size();
  agg.median_ratio = (n % 2 == 1) ? ratios[n / 2]
                                  : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
  return agg;
}

namespace {

std::string regime_label(int64_t s) {
  if (s <= 1024) return "short";
  if (s <= 4096) return "mid";
  return "long";
}

}  // namespace

std::vector<SensitivityRow> sensitivity(
    const std::vector<BenchRecord>& tune_records) {
  using GroupKey = std::tuple<int64_t, int64_t, int, bool>;
  std::map<GroupKey, std::vector<const BenchRecord*>> groups;
  for (const auto& r : tune_records) {
    if (r.status != BenchStatus::Ok || !r.schedule) continue;
    groups[{r.s, r.d, int(r.dtype), r.causal}].push_back(&r);
  }
  if (groups.empty())
    throw std::invalid_argument("sensitivity: no ok-status schedule records");
  std::vector<SensitivityRow> rows;
  for (const auto& [key, recs] : groups) {
    if (recs.size() < 2)
      throw std::invalid_argument(
          "sensitivity: insufficient data, need >= 2 ok schedules for S=" +
          std::to_string(std::get<0>(key)) +
          " D=" + std::to_string(std::get<1>(key)));
    const BenchRecord* best = nullptr;
    const BenchRecord* runner = nullptr;
    for (const BenchRecord* r : recs) {
      if (!best || r->tokens_per_s > best->tokens_per_s) {
        runner = best;
        best = r;
      } else if (!runner || r->tokens_per_s > runner->tokens_per_s) {
        runner = r;
      }
    }
    SensitivityRow row;
    row.regime = regime_label(std::get<0>(key));
    row.s = std::get<0>(key);
    row.d = std::get<1>(key);
    row.dtype = DType(std::get<2>(key));
    row.causal = std::get<3>(key);
    row.best = *best->schedule;
    row.runner_up = *runner->schedule;
    row.best_tokens_per_s = best->tokens_per_s;
    row.runner_up_tokens_per_s = runner->tokens_per_s;
    row.drop_percent =
        100.0 * (best->tokens_per_s - runner->tokens_per_s) / best->tokens_per_s;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tileattn
