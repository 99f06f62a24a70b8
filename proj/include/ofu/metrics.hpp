#pragma once

#include "ofu/fusion.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>

namespace ofu {

/// Mean absolute distance between two fields, over all voxels, in field
/// units (meters for TSDF).
template <class T>
double mad(const FusionField<T>& pred, const FusionField<T>& gt) {
  const DenseVolume<T> a = pred.as_dense();
  const DenseVolume<T> b = gt.as_dense();
  OFU_REQUIRE(a.desc == b.desc, "mad: descriptor mismatch");
  double acc = 0.0;
  for (std::int64_t v = 0; v < a.voxel_count(); ++v)
    acc += std::abs(static_cast<double>(a.at(0, v)) - static_cast<double>(b.at(0, v)));
  return acc / static_cast<double>(a.voxel_count());
}

/// MAD restricted to voxels within `band` of the surface in the ground
/// truth (diagnostic; not the headline metric).
template <class T>
double mad_near_surface(const FusionField<T>& pred, const FusionField<T>& gt, double band) {
  const DenseVolume<T> a = pred.as_dense();
  const DenseVolume<T> b = gt.as_dense();
  OFU_REQUIRE(a.desc == b.desc, "mad_near_surface: descriptor mismatch");
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t v = 0; v < a.voxel_count(); ++v) {
    if (std::abs(static_cast<double>(b.at(0, v))) >= band) continue;
    acc += std::abs(static_cast<double>(a.at(0, v)) - static_cast<double>(b.at(0, v)));
    ++count;
  }
  return count > 0 ? acc / count : 0.0;
}

struct OccupancyMetrics {
  double iou = 1.0;
  double precision = 1.0;
  double recall = 1.0;
};

/// Binary metrics over the occupied class. Conventions for degenerate
/// cases: empty-union IoU is 1; an empty prediction has precision 1; an
/// empty ground truth has recall 1.
template <class T>
OccupancyMetrics occupancy_metrics(const FusionField<T>& pred, const FusionField<T>& gt,
                                   double threshold = 0.5) {
  const DenseVolume<T> p = pred.as_dense();
  const DenseVolume<T> g = gt.as_dense();
  OFU_REQUIRE(p.desc == g.desc, "occupancy_metrics: descriptor mismatch");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::int64_t v = 0; v < p.voxel_count(); ++v) {
    const bool pv = static_cast<double>(p.at(0, v)) > threshold;
    const bool gv = static_cast<double>(g.at(0, v)) > threshold;
    tp += pv && gv;
    fp += pv && !gv;
    fn += !pv && gv;
  }
  OccupancyMetrics m;
  m.iou = (tp + fp + fn) > 0 ? static_cast<double>(tp) / (tp + fp + fn) : 1.0;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 1.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 1.0;
  return m;
}

/// One evaluation record; serialized as a JSON-lines row.
struct MetricsReport {
  std::string method;
  int resolution = 0;
  int views = 0;
  int scene = -1;
  double mad_mm = 0.0;
  double mad_surface_mm = 0.0;
  double iou = 0.0, precision = 0.0, recall = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"method", method},
                          {"resolution", resolution},
                          {"views", views},
                          {"scene", scene},
                          {"mad_mm", mad_mm},
                          {"mad_surface_mm", mad_surface_mm},
                          {"iou", iou},
                          {"precision", precision},
                          {"recall", recall}};
  }
};

/// Plain-text table, rows = resolutions, columns = methods (mean MAD in mm).
inline std::string metrics_table(const std::vector<MetricsReport>& reports,
                                 const std::vector<int>& resolutions,
                                 const std::vector<std::string>& methods) {
  std::ostringstream out;
  out << std::setw(10) << std::left << "res";
  for (const auto& m : methods) out << " | " << std::setw(12) << std::left << m;
  out << "\n";
  for (const int res : resolutions) {
    std::ostringstream label;
    label << res << "^3";
    out << std::setw(10) << std::left << label.str();
    for (const auto& m : methods) {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : reports)
        if (r.method == m && r.resolution == res) {
          sum += r.mad_mm;
          ++n;
        }
      std::ostringstream cell;
      if (n > 0)
        cell << std::fixed << std::setprecision(3) << (sum / n);
      else
        cell << "-";
      out << " | " << std::setw(12) << std::left << cell.str();
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace ofu
