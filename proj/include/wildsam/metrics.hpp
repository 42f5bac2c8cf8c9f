#pragma once

#include <cstdint>
#include <vector>

namespace wildsam {

// Per-mask-pair evaluation record. hd is in pixels (Euclidean, exact
// symmetric max-min over boundary pixels); hd_defined is false when exactly
// one of the masks is empty.
struct SegMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
  double dice = 0.0;
  double hd = 0.0;
  bool hd_defined = true;
};

// pred/gt: row-major binary masks (nonzero = foreground).
// Conventions: both empty -> all overlap metrics 1, hd 0; exactly one
// empty -> overlap metrics 0, hd undefined.
SegMetrics compute_metrics(const std::vector<uint8_t>& pred,
                           const std::vector<uint8_t>& gt, int height,
                           int width);

// Boundary pixels: foreground pixels 4-adjacent to background, where
// out-of-image counts as background. Returned as (row, col) pairs.
std::vector<std::pair<int, int>> boundary_pixels(
    const std::vector<uint8_t>& mask, int height, int width);

// Mean over records; hd averaged over defined entries only.
struct MetricsSummary {
  double precision = 0.0, recall = 0.0, iou = 0.0, dice = 0.0, hd = 0.0;
  int count = 0;
  int hd_defined_count = 0;
};
MetricsSummary summarize(const std::vector<SegMetrics>& records);

}  // namespace wildsam
