#include "ecrl/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ecrl/metrics.hpp"

namespace ecrl::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string metrics_csv_header(int num_constraints) {
  std::ostringstream os;
  os << kMetricsSchemaTag << '\n';
  os << "iteration,algorithm,seed,reward_return,episode_len_steps,mean_power_w";
  for (int i = 1; i <= num_constraints; ++i) os << ",jc_" << i;
  for (int i = 1; i <= num_constraints; ++i) os << ",lambda_" << i;
  os << ",surrogate,entropy,critic_loss";
  for (int i = 1; i <= num_constraints; ++i) os << ",penalty_" << i;
  os << ",total,recovery\n";
  return os.str();
}

void append_metrics_row(std::ostream& os, const RunRecord& rec, const IterationRow& row) {
  os << row.iteration << ',' << rec.algorithm << ',' << rec.seed << ','
     << fmt_double(row.reward_return) << ',' << fmt_double(row.episode_len_steps) << ','
     << fmt_double(row.mean_power_w);
  for (Eigen::Index i = 0; i < row.jc.size(); ++i) os << ',' << fmt_double(row.jc[i]);
  for (Eigen::Index i = 0; i < row.lambda.size(); ++i) os << ',' << fmt_double(row.lambda[i]);
  os << ',' << fmt_double(row.surrogate) << ',' << fmt_double(row.entropy) << ','
     << fmt_double(row.critic_loss);
  for (Eigen::Index i = 0; i < row.penalties.size(); ++i)
    os << ',' << fmt_double(row.penalties[i]);
  os << ',' << fmt_double(row.total) << ',' << (row.recovery ? 1 : 0) << '\n';
}

void write_metrics_csv(const std::string& path, const RunRecord& rec) {
  const int m = rec.rows.empty() ? 0 : static_cast<int>(rec.rows.front().jc.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << metrics_csv_header(m);
  for (const auto& row : rec.rows) append_metrics_row(os, rec, row);
}

RunRecord read_metrics_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsSchemaTag)
    throw std::runtime_error("unrecognized metrics schema in " + path);
  if (!std::getline(is, line)) throw std::runtime_error("missing header in " + path);
  const auto header = split_csv_line(line);
  int m = 0;
  for (const auto& col : header)
    if (col.rfind("jc_", 0) == 0) ++m;

  RunRecord rec;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::runtime_error("bad row in " + path);
    std::size_t k = 0;
    IterationRow row;
    row.iteration = std::stoi(f[k++]);
    rec.algorithm = f[k++];
    rec.seed = static_cast<std::uint64_t>(std::stoull(f[k++]));
    row.reward_return = std::stod(f[k++]);
    row.episode_len_steps = std::stod(f[k++]);
    row.mean_power_w = std::stod(f[k++]);
    row.jc.resize(m);
    for (int i = 0; i < m; ++i) row.jc[i] = std::stod(f[k++]);
    row.lambda.resize(m);
    for (int i = 0; i < m; ++i) row.lambda[i] = std::stod(f[k++]);
    row.surrogate = std::stod(f[k++]);
    row.entropy = std::stod(f[k++]);
    row.critic_loss = std::stod(f[k++]);
    row.penalties.resize(m);
    for (int i = 0; i < m; ++i) row.penalties[i] = std::stod(f[k++]);
    row.total = std::stod(f[k++]);
    row.recovery = f[k++] == "1";
    rec.rows.push_back(std::move(row));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// SVG plotting
// ---------------------------------------------------------------------------

namespace {

constexpr int kW = 720, kH = 420;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};

struct Extent {
  double lo = 0.0, hi = 1.0;
  void expand(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

}  // namespace

std::string render_svg_plot(const PlotSpec& spec) {
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& s : spec.series) {
    for (double v : s.x) {
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
    }
    for (double v : s.mean) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
    for (double v : s.lo) y_lo = std::min(y_lo, v);
    for (double v : s.hi) y_hi = std::max(y_hi, v);
  }
  if (spec.threshold) {
    y_lo = std::min(y_lo, *spec.threshold);
    y_hi = std::max(y_hi, *spec.threshold);
  }
  if (x_lo > x_hi) {
    x_lo = 0;
    x_hi = 1;
  }
  if (y_lo > y_hi) {
    y_lo = 0;
    y_hi = 1;
  }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;
  const double y_pad = 0.05 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;

  const auto px = [&](double x) {
    return kMarginL + (x - x_lo) / (x_hi - x_lo) * (kW - kMarginL - kMarginR);
  };
  const auto py = [&](double y) {
    return kH - kMarginB - (y - y_lo) / (y_hi - y_lo) * (kH - kMarginT - kMarginB);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\" "
        "font-family=\"sans-serif\">" << spec.title << "</text>\n";

  // Axes and ticks.
  os << "<line x1=\"" << kMarginL << "\" y1=\"" << kH - kMarginB << "\" x2=\"" << kW - kMarginR
     << "\" y2=\"" << kH - kMarginB << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL
     << "\" y2=\"" << kH - kMarginB << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x_lo + (x_hi - x_lo) * k / 5.0;
    const double yv = y_lo + (y_hi - y_lo) * k / 5.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << kH - kMarginB + 18
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
       << fmt_short(xv) << "</text>\n";
    os << "<text x=\"" << kMarginL - 8 << "\" y=\"" << py(yv) + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
       << fmt_short(yv) << "</text>\n";
  }
  os << "<text x=\"" << (kMarginL + kW - kMarginR) / 2 << "\" y=\"" << kH - 12
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
     << spec.x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << (kMarginT + kH - kMarginB) / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
        "transform=\"rotate(-90 16 " << (kMarginT + kH - kMarginB) / 2 << ")\">"
     << spec.y_label << "</text>\n";

  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!s.lo.empty() && s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        os << px(s.x[i]) << ',' << py(s.lo[i]) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;)
        os << px(s.x[i]) << ',' << py(s.hi[i]) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.mean[i]) << ' ';
    os << "\"/>\n";
    // Legend entry.
    const double ly = kMarginT + 16.0 * static_cast<double>(si);
    os << "<line x1=\"" << kW - kMarginR - 130 << "\" y1=\"" << ly << "\" x2=\""
       << kW - kMarginR - 110 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kMarginR - 105 << "\" y=\"" << ly + 4
       << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label << "</text>\n";
  }

  if (spec.threshold) {
    const double ty = py(*spec.threshold);
    os << "<line id=\"" << spec.threshold_id << "\" data-value=\"" << fmt_double(*spec.threshold)
       << "\" x1=\"" << kMarginL << "\" y1=\"" << ty << "\" x2=\"" << kW - kMarginR
       << "\" y2=\"" << ty << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    os << "<text x=\"" << kW - kMarginR - 4 << "\" y=\"" << ty - 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">threshold "
       << fmt_short(*spec.threshold) << "</text>\n";
  }

  os << "</svg>\n";
  return os.str();
}

void write_svg_plot(const std::string& path, const PlotSpec& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << render_svg_plot(spec);
  if (!os) throw std::runtime_error("write failed: " + path);
}

namespace {

// Mean +- one standard deviation across seed runs, truncated to the shortest
// run of each algorithm.
SeriesBand band_for(const std::string& label, const std::vector<const RunRecord*>& runs,
                    const std::function<double(const IterationRow&)>& get) {
  SeriesBand band;
  band.label = label;
  std::size_t len = SIZE_MAX;
  for (const auto* r : runs) len = std::min(len, r->rows.size());
  if (len == SIZE_MAX) len = 0;
  for (std::size_t i = 0; i < len; ++i) {
    double mean = 0.0;
    for (const auto* r : runs) mean += get(r->rows[i]);
    mean /= static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto* r : runs) {
      const double d = get(r->rows[i]) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(runs.size()));
    band.x.push_back(static_cast<double>(runs.front()->rows[i].iteration));
    band.mean.push_back(mean);
    band.lo.push_back(mean - sd);
    band.hi.push_back(mean + sd);
  }
  return band;
}

}  // namespace

void emit_reports(const std::vector<RunRecord>& records, const ExperimentConfig& cfg,
                  const std::string& out_dir) {
  if (records.empty()) throw std::invalid_argument("emit_reports: no records");
  fs::create_directories(out_dir);

  // Summary CSV.
  const MetricsSummary summary = normalized_metrics(records, cfg.stability.window);
  {
    std::ofstream os(out_dir + "/summary.csv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write summary.csv in " + out_dir);
    os << metrics_summary_csv(summary);
  }

  // Group runs per algorithm, preserving first-seen order.
  std::vector<std::string> algos;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& rec : records) {
    if (!groups.count(rec.algorithm)) algos.push_back(rec.algorithm);
    groups[rec.algorithm].push_back(&rec);
  }

  const int m = records.front().rows.empty()
                    ? static_cast<int>(cfg.constraints.size())
                    : static_cast<int>(records.front().rows.front().jc.size());

  auto make_plot = [&](const std::string& file, const std::string& title,
                       const std::string& ylabel,
                       const std::function<double(const IterationRow&)>& get,
                       std::optional<double> threshold, const std::string& tid) {
    PlotSpec spec;
    spec.title = title;
    spec.x_label = "iteration";
    spec.y_label = ylabel;
    spec.threshold = threshold;
    spec.threshold_id = tid;
    for (const auto& a : algos) spec.series.push_back(band_for(a, groups[a], get));
    write_svg_plot(out_dir + "/" + file, spec);
  };

  make_plot("reward.svg", "Episode reward return", "reward",
            [](const IterationRow& r) { return r.reward_return; }, std::nullopt, "");
  make_plot("episode_length.svg", "Episode length", "steps",
            [](const IterationRow& r) { return r.episode_len_steps; }, std::nullopt, "");
  for (int i = 0; i < m; ++i) {
    const double b = i < static_cast<int>(cfg.constraints.size())
                         ? cfg.constraints[static_cast<std::size_t>(i)].threshold_b
                         : 0.0;
    make_plot("constraint_" + std::to_string(i + 1) + ".svg",
              "Constraint return J^C" + std::to_string(i + 1), "J^C",
              [i](const IterationRow& r) { return r.jc[i]; }, b,
              "threshold-c" + std::to_string(i + 1));
    make_plot("lambda_" + std::to_string(i + 1) + ".svg",
              "Lagrange multiplier " + std::to_string(i + 1), "lambda",
              [i](const IterationRow& r) { return r.lambda[i]; }, std::nullopt, "");
  }
}

}  // namespace ecrl::harness
