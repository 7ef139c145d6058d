#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <tuple>

#include "tileattn/analysis.hpp"

namespace tileattn {

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
  if (std::isnan(v)) return "NaN";
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

struct Svg {
  std::string body;
  double w, h;

  Svg(double w_, double h_) : w(w_), h(h_) {
    body += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) +
            "\" height=\"" + fmt(h) + "\" viewBox=\"0 0 " + fmt(w) + " " +
            fmt(h) + "\">\n";
    body +=
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" "
        "patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">"
        "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" "
        "stroke-width=\"1\"/></pattern></defs>\n";
    body += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width = 1.0) {
    body += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" +
            fmt(x2) + "\" y2=\"" + fmt(y2) + "\" stroke=\"" + color +
            "\" stroke-width=\"" + fmt(width) + "\"/>\n";
  }

  void rect(double x, double y, double w_, double h_, const std::string& fill,
            const std::string& stroke = "#333333") {
    body += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" +
            fmt(w_) + "\" height=\"" + fmt(h_) + "\" fill=\"" + fill +
            "\" stroke=\"" + stroke + "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color) {
    body += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"" +
            fmt(r) + "\" fill=\"" + color + "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size = 11,
            const char* anchor = "middle", const std::string& color = "#111111") {
    body += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) +
            "\" font-family=\"sans-serif\" font-size=\"" + fmt(size) +
            "\" text-anchor=\"" + anchor + "\" fill=\"" + color + "\">" + s +
            "</text>\n";
  }

  void save(const std::string& path) {
    body += "</svg>\n";
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << body;
    if (!out.good()) throw std::runtime_error("write failed: " + path);
  }
};

using Panel = std::tuple<int64_t, int, bool>;  // (D, dtype, causal)

// The (D, dtype, mask) slice with the most ok records; ties break toward the
// smallest key so repeated runs pick the same panel.
Panel pick_panel(const std::vector<BenchRecord>& records) {
  std::map<Panel, int> counts;
  for (const auto& r : records)
    if (r.status == BenchStatus::Ok) counts[{r.d, int(r.dtype), r.causal}]++;
  Panel best{0, 0, false};
  int best_n = -1;
  for (const auto& [panel, n] : counts)
    if (n > best_n) {
      best = panel;
      best_n = n;
    }
  return best;
}

bool in_panel(const BenchRecord& r, const Panel& p) {
  return r.d == std::get<0>(p) && int(r.dtype) == std::get<1>(p) &&
         r.causal == std::get<2>(p);
}

std::string panel_label(const Panel& p) {
  return "D=" + std::to_string(std::get<0>(p)) + ", " +
         std::string(to_string(DType(std::get<1>(p)))) +
         (std::get<2>(p) ? ", causal" : ", non-causal");
}

// First ok record per (method, S) within the panel.
std::map<std::pair<std::string, int64_t>, const BenchRecord*> panel_points(
    const std::vector<BenchRecord>& records, const Panel& panel) {
  std::map<std::pair<std::string, int64_t>, const BenchRecord*> points;
  for (const auto& r : records)
    if (r.status == BenchStatus::Ok && in_panel(r, panel))
      points.emplace(std::pair{r.method, r.s}, &r);
  return points;
}

// percent 0 -> blue, 100 -> white, >= 200 -> red
std::string heat_color(double percent) {
  const double t = std::clamp(percent, 0.0, 200.0) / 100.0;
  auto lerp = [](double a, double b, double u) { return a + (b - a) * u; };
  double r, g, b;
  if (t < 1.0) {
    r = lerp(0x35, 0xff, t);
    g = lerp(0x6f, 0xff, t);
    b = lerp(0xb8, 0xff, t);
  } else {
    r = lerp(0xff, 0xc8, t - 1.0);
    g = lerp(0xff, 0x32, t - 1.0);
    b = lerp(0xff, 0x28, t - 1.0);
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", int(r), int(g), int(b));
  return buf;
}

void emit_throughput_plot(const std::vector<BenchRecord>& records,
                          const Panel& panel, const std::string& out_dir) {
  const auto points = panel_points(records, panel);
  std::set<int64_t> s_set;
  std::set<std::string> methods;
  double y_max = 0.0;
  for (const auto& [key, rec] : points) {
    s_set.insert(key.second);
    methods.insert(key.first);
    y_max = std::max(y_max, rec->tokens_per_s);
  }

  // companion CSV: the plotted series plus the FLOP-rate cross-check column
  {
    std::ofstream csv(out_dir + "/throughput_vs_s.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write throughput_vs_s.csv");
    csv << "method,B,H,S,D,dtype,causal,median_ms,p95_ms,tokens_per_s,"
           "tokens_per_s_p95,bw_proxy,flops_per_s\n";
    for (const auto& [key, r] : points) {
      csv << r->method << ',' << r->b << ',' << r->h << ',' << r->s << ','
          << r->d << ',' << to_string(r->dtype) << ',' << (r->causal ? 1 : 0)
          << ',' << fmt(r->median_ms, "%.17g") << ',' << fmt(r->p95_ms, "%.17g")
          << ',' << fmt(r->tokens_per_s, "%.17g") << ','
          << fmt(tokens_per_second(r->b, r->h, r->s, r->p95_ms), "%.17g") << ','
          << fmt(r->bw_proxy, "%.17g") << ','
          << fmt(flop_rate(r->b, r->h, r->s, r->d, r->median_ms), "%.17g")
          << '\n';
    }
  }

  const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  Svg svg(W, H);
  svg.text(W / 2, 20, "Throughput vs sequence length (" + panel_label(panel) + ")",
           13);
  svg.line(ml, H - mb, W - mr, H - mb, "#333333");
  svg.line(ml, mt, ml, H - mb, "#333333");
  svg.text(W / 2, H - 12, "S (tokens)");
  svg.text(14, H / 2, "tokens/s", 11, "middle");

  std::vector<int64_t> s_vals(s_set.begin(), s_set.end());
  const double span_x = W - ml - mr;
  const double span_y = H - mt - mb;
  auto x_of = [&](size_t idx) {
    return ml + span_x * (double(idx) + 0.5) / double(std::max<size_t>(1, s_vals.size()));
  };
  auto y_of = [&](double v) {
    return H - mb - (y_max > 0 ? span_y * v / (1.1 * y_max) : 0.0);
  };
  for (size_t i = 0; i < s_vals.size(); ++i)
    svg.text(x_of(i), H - mb + 16, std::to_string(s_vals[i]), 10);
  for (int g = 0; g <= 4; ++g) {
    const double v = 1.1 * y_max * g / 4.0;
    svg.line(ml - 3, y_of(v), ml, y_of(v), "#333333");
    svg.text(ml - 6, y_of(v) + 4, fmt(v, "%.3g"), 9, "end");
  }

  int mi = 0;
  for (const auto& method : methods) {
    const std::string color = kPalette[mi % 6];
    const double dx = (double(mi) - double(methods.size() - 1) / 2.0) * 4.0;
    double px = 0, py = 0;
    bool has_prev = false;
    for (size_t i = 0; i < s_vals.size(); ++i) {
      const auto it = points.find({method, s_vals[i]});
      if (it == points.end()) {
        has_prev = false;
        continue;
      }
      const BenchRecord* r = it->second;
      const double x = x_of(i) + dx;
      const double y = y_of(r->tokens_per_s);
      if (has_prev) svg.line(px, py, x, y, color, 1.5);
      svg.circle(x, y, 3, color);
      // downward whisker to the p95-latency-equivalent throughput bound
      const double y95 = y_of(tokens_per_second(r->b, r->h, r->s, r->p95_ms));
      svg.line(x, y, x, y95, color, 1.0);
      svg.line(x - 3, y95, x + 3, y95, color, 1.0);
      px = x;
      py = y;
      has_prev = true;
    }
    svg.text(W - mr - 6, mt + 14 + 14 * mi, method, 11, "end", color);
    ++mi;
  }
  svg.save(out_dir + "/throughput_vs_s.svg");
}

void emit_regime_plot(const std::vector<BenchRecord>& records,
                      const std::string& method, const std::string& baseline,
                      const std::string& out_dir) {
  const auto cells = regime_map(records, method, baseline);

  {
    std::ofstream csv(out_dir + "/regime_map.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write regime_map.csv");
    csv << "S,D,percent\n";
    for (const auto& c : cells)
      csv << c.s << ',' << c.d << ',' << fmt(c.percent, "%.17g") << '\n';
  }

  std::set<int64_t> s_set, d_set;
  for (const auto& c : cells) {
    s_set.insert(c.s);
    d_set.insert(c.d);
  }
  std::vector<int64_t> s_vals(s_set.begin(), s_set.end());
  std::vector<int64_t> d_vals(d_set.begin(), d_set.end());

  const double W = 640, H = 420, ml = 80, mr = 20, mt = 50, mb = 50;
  Svg svg(W, H);
  svg.text(W / 2, 20, method + " as % of " + baseline + " (100 = parity)", 13);
  const double cw = s_vals.empty() ? 0 : (W - ml - mr) / double(s_vals.size());
  const double ch = d_vals.empty() ? 0 : (H - mt - mb) / double(d_vals.size());
  for (const auto& c : cells) {
    const size_t xi = size_t(std::find(s_vals.begin(), s_vals.end(), c.s) -
                             s_vals.begin());
    const size_t yi = size_t(std::find(d_vals.begin(), d_vals.end(), c.d) -
                             d_vals.begin());
    const double x = ml + cw * double(xi);
    const double y = mt + ch * double(yi);
    if (std::isnan(c.percent)) {
      svg.rect(x, y, cw, ch, "url(#hatch)");
      svg.text(x + cw / 2, y + ch / 2 + 4, "n/a", 10);
    } else {
      svg.rect(x, y, cw, ch, heat_color(c.percent));
      svg.text(x + cw / 2, y + ch / 2 + 4, fmt(c.percent, "%.1f") + "%", 10);
    }
  }
  for (size_t i = 0; i < s_vals.size(); ++i)
    svg.text(ml + cw * (double(i) + 0.5), H - mb + 16,
             std::to_string(s_vals[i]), 10);
  for (size_t i = 0; i < d_vals.size(); ++i)
    svg.text(ml - 8, mt + ch * (double(i) + 0.5) + 4,
             "D=" + std::to_string(d_vals[i]), 10, "end");
  svg.text(W / 2, H - 12, "S (tokens)");
  svg.save(out_dir + "/regime_map.svg");
}

void emit_bw_plot(const std::vector<BenchRecord>& records, const Panel& panel,
                  const std::string& out_dir) {
  const auto points = panel_points(records, panel);
  std::set<int64_t> s_set;
  std::set<std::string> methods;
  std::vector<double> proxies;
  std::vector<const BenchRecord*> ordered;
  for (const auto& [key, rec] : points) {
    s_set.insert(key.second);
    methods.insert(key.first);
    ordered.push_back(rec);
    proxies.push_back(rec->bw_proxy);
  }
  std::vector<double> norm;
  if (!proxies.empty()) {
    bool any_finite = false;
    for (double v : proxies) any_finite |= std::isfinite(v);
    norm = any_finite ? normalize_bw(proxies)
                      : std::vector<double>(proxies.size(),
                                            std::numeric_limits<double>::quiet_NaN());
  }
  std::map<std::pair<std::string, int64_t>, double> norm_of;
  for (size_t i = 0; i < ordered.size(); ++i)
    norm_of[{ordered[i]->method, ordered[i]->s}] = norm[i];

  {
    std::ofstream csv(out_dir + "/bw_proxy.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write bw_proxy.csv");
    csv << "method,S,D,dtype,causal,bw_proxy,normalized\n";
    for (const auto* r : ordered)
      csv << r->method << ',' << r->s << ',' << r->d << ','
          << to_string(r->dtype) << ',' << (r->causal ? 1 : 0) << ','
          << fmt(r->bw_proxy, "%.17g") << ','
          << fmt(norm_of[{r->method, r->s}], "%.17g") << '\n';
  }

  const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  Svg svg(W, H);
  svg.text(W / 2, 20,
           "Normalized bandwidth proxy vs S (" + panel_label(panel) + ")", 13);
  svg.line(ml, H - mb, W - mr, H - mb, "#333333");
  svg.line(ml, mt, ml, H - mb, "#333333");
  svg.text(W / 2, H - 12, "S (tokens)");
  std::vector<int64_t> s_vals(s_set.begin(), s_set.end());
  const double span_x = W - ml - mr;
  const double span_y = H - mt - mb;
  auto x_of = [&](size_t idx) {
    return ml + span_x * (double(idx) + 0.5) / double(std::max<size_t>(1, s_vals.size()));
  };
  auto y_of = [&](double v) { return H - mb - span_y * v / 1.1; };
  for (size_t i = 0; i < s_vals.size(); ++i)
    svg.text(x_of(i), H - mb + 16, std::to_string(s_vals[i]), 10);
  for (int g = 0; g <= 4; ++g) {
    const double v = 1.1 * g / 4.0;
    svg.line(ml - 3, y_of(v), ml, y_of(v), "#333333");
    svg.text(ml - 6, y_of(v) + 4, fmt(v, "%.2f"), 9, "end");
  }
  int mi = 0;
  for (const auto& method : methods) {
    const std::string color = kPalette[mi % 6];
    double px = 0, py = 0;
    bool has_prev = false;
    for (size_t i = 0; i < s_vals.size(); ++i) {
      const auto it = norm_of.find({method, s_vals[i]});
      if (it == norm_of.end() || std::isnan(it->second)) {
        has_prev = false;  // NaN points are absent, never drawn as 0
        continue;
      }
      const double x = x_of(i), y = y_of(it->second);
      if (has_prev) svg.line(px, py, x, y, color, 1.5);
      svg.circle(x, y, 3, color);
      px = x;
      py = y;
      has_prev = true;
    }
    svg.text(W - mr - 6, mt + 14 + 14 * mi, method, 11, "end", color);
    ++mi;
  }
  svg.save(out_dir + "/bw_proxy.svg");
}

}  // namespace

void emit_plots(const std::vector<BenchRecord>& records,
                const std::string& out_dir, const std::string& method,
                const std::string& baseline) {
  if (records.empty()) {
    std::cerr << "emit_plots: no records, nothing to plot\n";
    return;
  }
  std::filesystem::create_directories(out_dir);
  const Panel panel = pick_panel(records);
  emit_throughput_plot(records, panel, out_dir);
  emit_regime_plot(records, method, baseline, out_dir);
  emit_bw_plot(records, panel, out_dir);
}

}  // namespace tileattn
