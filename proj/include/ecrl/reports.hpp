#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecrl/config.hpp"
#include "ecrl/train.hpp"

namespace ecrl::harness {

// Fixed, versioned metrics schema. Doubles are written round-trip exact.
constexpr const char* kMetricsSchemaTag = "# ecrl-metrics-v1";

std::string metrics_csv_header(int num_constraints);
void append_metrics_row(std::ostream& os, const RunRecord& rec, const IterationRow& row);
void write_metrics_csv(const std::string& path, const RunRecord& rec);
RunRecord read_metrics_csv(const std::string& path);

// Minimal standalone SVG line plots: per-series mean line with a shaded
// min/max band, optional dashed threshold guide line carrying its value in a
// data-value attribute.
struct SeriesBand {
  std::string label;
  std::vector<double> x, mean, lo, hi;
};

struct PlotSpec {
  std::string title, x_label, y_label;
  std::vector<SeriesBand> series;
  std::optional<double> threshold;
  std::string threshold_id = "threshold";
};

std::string render_svg_plot(const PlotSpec& spec);
void write_svg_plot(const std::string& path, const PlotSpec& spec);

// Writes summary.csv plus the standard plot set (reward, episode length,
// constraint returns with threshold guides, multiplier traces) from a group
// of runs. Directory must exist or be creatable.
void emit_reports(const std::vector<RunRecord>& records, const ExperimentConfig& cfg,
                  const std::string& out_dir);

}  // namespace ecrl::harness
