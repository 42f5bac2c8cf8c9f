#include "wildsam/metrics.hpp"

#include <cmath>
#include <limits>

#include "wildsam/tensor.hpp"

namespace wildsam {

std::vector<std::pair<int, int>> boundary_pixels(
    const std::vector<uint8_t>& mask, int height, int width) {
  std::vector<std::pair<int, int>> out;
  auto bg = [&](int r, int c) {
    if (r < 0 || r >= height || c < 0 || c >= width) return true;
    return mask[static_cast<size_t>(r) * width + c] == 0;
  };
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      if (mask[static_cast<size_t>(r) * width + c] == 0) continue;
      if (bg(r - 1, c) || bg(r + 1, c) || bg(r, c - 1) || bg(r, c + 1))
        out.emplace_back(r, c);
    }
  return out;
}

namespace {

double directed_hd_sq(const std::vector<std::pair<int, int>>& from,
                      const std::vector<std::pair<int, int>>& to) {
  double worst = 0.0;
  for (auto [r, c] : from) {
    double best = std::numeric_limits<double>::infinity();
    for (auto [r2, c2] : to) {
      double dr = r - r2, dc = c - c2;
      double d = dr * dr + dc * dc;
      if (d < best) best = d;
    }
    if (best > worst) worst = best;
  }
  return worst;
}

}  // namespace

SegMetrics compute_metrics(const std::vector<uint8_t>& pred,
                           const std::vector<uint8_t>& gt, int height,
                           int width) {
  const size_t n = static_cast<size_t>(height) * width;
  if (pred.size() != n || gt.size() != n)
    throw DimensionError("compute_metrics: mask size mismatch");
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < n; ++i) {
    bool p = pred[i] != 0, g = gt[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  SegMetrics m;
  const bool pred_empty = (tp + fp) == 0;
  const bool gt_empty = (tp + fn) == 0;
  if (pred_empty && gt_empty) {
    m.precision = m.recall = m.iou = m.dice = 1.0;
    m.hd = 0.0;
    m.hd_defined = true;
    return m;
  }
  if (pred_empty || gt_empty) {
    m.hd_defined = false;
    return m;
  }
  m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
  m.dice = 2.0 * static_cast<double>(tp) /
           static_cast<double>(2 * tp + fp + fn);
  auto bp = boundary_pixels(pred, height, width);
  auto bg = boundary_pixels(gt, height, width);
  m.hd = std::sqrt(std::max(directed_hd_sq(bp, bg), directed_hd_sq(bg, bp)));
  m.hd_defined = true;
  return m;
}

MetricsSummary summarize(const std::vector<SegMetrics>& records) {
  MetricsSummary s;
  for (const auto& m : records) {
    s.precision += m.precision;
    s.recall += m.recall;
    s.iou += m.iou;
    s.dice += m.dice;
    if (m.hd_defined) {
      s.hd += m.hd;
      ++s.hd_defined_count;
    }
    ++s.count;
  }
  if (s.count > 0) {
    s.precision /= s.count;
    s.recall /= s.count;
    s.iou /= s.count;
    s.dice /= s.count;
  }
  if (s.hd_defined_count > 0) s.hd /= s.hd_defined_count;
  return s;
}

}  // namespace wildsam
