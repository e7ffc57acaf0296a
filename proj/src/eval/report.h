#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "data/dataset.h"
#include "eval/metrics.h"
#include "nets/model.h"
#include "train/config.h"

namespace tritex {

struct MetricRow {
  std::string prompt;
  double mask_iou = 0.0;
  std::optional<double> mask_fid;
  std::optional<double> clip_score;
  std::optional<double> render_fid;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow aggregate;  // mean of rows (null-aware per column)
  std::map<std::string, std::string> metadata;
};

// Per-prompt metrics with inference-style inputs (dummy point cloud): volume
// masks against the paired shape's silhouettes, plus embedder-based scores.
// render_fid needs a precomputed reference-image directory (PNG files); pass
// an empty string to leave it null.
MetricReport evaluate_model(const Model& model, const Dataset& ds, const RunConfig& cfg,
                            const std::string& ref_image_dir);

// Fixed header: prompt,mask_iou,mask_fid,clip_score,render_fid; metadata as
// leading '#' comment lines; one aggregate row after the per-prompt rows.
void save_report_csv(const std::string& path, const MetricReport& report);

}  // namespace tritex
