#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/covariates.hpp"
#include "earseg/mask.hpp"
#include "earseg/postprocess.hpp"

namespace earseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t all() const { return tp + fp + fn + tn; }
};

struct MetricsRecord {
  std::string id;
  double accuracy = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double overlap = 0.0;
};

inline ConfusionCounts confusion(const LabelMask& gt, const LabelMask& pred) {
  if (!gt.same_size(pred)) {
    throw std::invalid_argument("confusion: mask sizes differ (" + std::to_string(gt.width) + "x" +
                                std::to_string(gt.height) + " vs " + std::to_string(pred.width) +
                                "x" + std::to_string(pred.height) + ")");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    const bool g = gt.values[i] != 0;
    const bool p = pred.values[i] != 0;
    c.tp += (g && p);
    c.fp += (!g && p);
    c.fn += (g && !p);
    c.tn += (!g && !p);
  }
  return c;
}

// Accuracy = (TP+TN)/All, IoU = TP/(TP+FP+FN), Precision = TP/(TP+FP),
// Recall = TP/(TP+FN), Overlap = 2|G∩R|/(|G|+|R|) with |G| = TP+FN and
// |R| = TP+FP. Zero denominators give 0, except the mutual-absence cases
// (IoU with TP=FP=FN=0, Overlap with |G|+|R|=0) which give 1: when both
// truth and prediction agree no ear exists, the image is perfect, not failed.
inline MetricsRecord metrics_from_counts(const ConfusionCounts& c) {
  if (c.all() == 0) throw std::invalid_argument("metrics: empty confusion counts");
  MetricsRecord m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.all());
  const std::uint64_t iou_den = c.tp + c.fp + c.fn;
  m.iou = iou_den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(iou_den);
  m.precision = (c.tp + c.fp) == 0 ? 0.0
                                   : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = (c.tp + c.fn) == 0 ? 0.0
                                : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const std::uint64_t o_den = (c.tp + c.fn) + (c.tp + c.fp);
  m.overlap = o_den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(o_den);
  return m;
}

inline MetricsRecord compute_metrics(const std::string& id, const LabelMask& gt,
                                     const LabelMask& pred) {
  MetricsRecord m = metrics_from_counts(confusion(gt, pred));
  m.id = id;
  return m;
}

inline double overlap(const LabelMask& gt, const LabelMask& pred) {
  return metrics_from_counts(confusion(gt, pred)).overlap;
}

// ---------------------------------------------------------------------------
// Detection accuracy (fraction of images counted as correct detections).

struct DetectionCriterion {
  enum class Metric { Iou, Overlap } metric = Metric::Overlap;
  double threshold = 0.5;
};

inline double detection_accuracy(const std::vector<MetricsRecord>& records,
                                 const DetectionCriterion& criterion = {}) {
  if (records.empty()) throw std::invalid_argument("detection accuracy: no records");
  std::size_t hits = 0;
  for (const auto& r : records) {
    const double v = criterion.metric == DetectionCriterion::Metric::Iou ? r.iou : r.overlap;
    hits += (v >= criterion.threshold);
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Rectangle-detector comparison protocol.

inline std::vector<BoundingBox> gt_to_bounding_rects(const LabelMask& gt,
                                                     Connectivity connectivity =
                                                         Connectivity::Eight) {
  std::vector<BoundingBox> rects;
  for (const auto& region : connected_components(gt, connectivity).regions) {
    rects.push_back(region.bbox);
  }
  return rects;
}

// Paints rectangles (clipped to the image) into a binary mask so rectangle
// detections can be scored by the very same pixel-wise protocol as masks.
inline LabelMask rasterize_rects(const std::vector<BoundingBox>& rects, int width, int height) {
  LabelMask out(width, height);
  for (const auto& r : rects) {
    const int x0 = std::max(0, r.left);
    const int y0 = std::max(0, r.top);
    const int x1 = std::min(width, r.right());
    const int y1 = std::min(height, r.bottom());
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) out.values[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
  return out;
}

inline MetricsRecord evaluate_rect_detections(const std::vector<BoundingBox>& gt_rects,
                                              const std::vector<BoundingBox>& detected_rects,
                                              int width, int height) {
  return metrics_from_counts(confusion(rasterize_rects(gt_rects, width, height),
                                       rasterize_rects(detected_rects, width, height)));
}

// ---------------------------------------------------------------------------
// Aggregation.

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1); 0 when n < 2
};

struct Histogram {
  int bins = 20;
  std::vector<std::size_t> counts;  // fixed-width bins over [0,1]
};

struct BoxplotStats {
  double median = 0.0, q1 = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;
  std::vector<double> values;  // raw per-image values, sorted
};

struct AggregateReport {
  std::size_t count = 0;
  SummaryStat accuracy, iou, precision, recall, overlap;
  std::map<std::string, Histogram> histograms;  // metric name -> bins
  // covariate field -> label -> IoU boxplot data
  std::map<std::string, std::map<std::string, BoxplotStats>> covariate_iou;
};

namespace detail {

inline SummaryStat summarize(const std::vector<double>& v) {
  SummaryStat s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline Histogram histogram01(const std::vector<double>& v, int bins) {
  Histogram h;
  h.bins = bins;
  h.counts.assign(bins, 0);
  for (double x : v) {
    int b = static_cast<int>(x * bins);
    b = std::clamp(b, 0, bins - 1);  // x == 1 lands in the top bin
    ++h.counts[b];
  }
  return h;
}

// Quantile with linear interpolation between order statistics.
inline double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline BoxplotStats boxplot(std::vector<double> values) {
  BoxplotStats b;
  std::sort(values.begin(), values.end());
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = values.front();
  b.whisker_high = values.back();
  for (double v : values) {
    if (v >= lo_fence) {
      b.whisker_low = v;
      break;
    }
  }
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    if (*it <= hi_fence) {
      b.whisker_high = *it;
      break;
    }
  }
  b.values = std::move(values);
  return b;
}

}  // namespace detail

// Aggregates per-image records into mean/std summary statistics, metric
// histograms, and per-covariate-label IoU breakdowns. Pass an empty
// annotation map to skip the covariate analysis; with annotations present,
// every record id must be joinable or the error lists the offenders.
inline AggregateReport aggregate(const std::vector<MetricsRecord>& records,
                                 const std::map<std::string, Covariates>& annotations = {},
                                 int histogram_bins = 20) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  if (histogram_bins < 1) throw std::invalid_argument("aggregate: histogram_bins must be >= 1");

  AggregateReport rep;
  rep.count = records.size();
  std::vector<double> acc, iou, prec, rec, ovl;
  for (const auto& r : records) {
    acc.push_back(r.accuracy);
    iou.push_back(r.iou);
    prec.push_back(r.precision);
    rec.push_back(r.recall);
    ovl.push_back(r.overlap);
  }
  rep.accuracy = detail::summarize(acc);
  rep.iou = detail::summarize(iou);
  rep.precision = detail::summarize(prec);
  rep.recall = detail::summarize(rec);
  rep.overlap = detail::summarize(ovl);
  rep.histograms["accuracy"] = detail::histogram01(acc, histogram_bins);
  rep.histograms["iou"] = detail::histogram01(iou, histogram_bins);
  rep.histograms["precision"] = detail::histogram01(prec, histogram_bins);
  rep.histograms["recall"] = detail::histogram01(rec, histogram_bins);
  rep.histograms["overlap"] = detail::histogram01(ovl, histogram_bins);

  if (!annotations.empty()) {
    std::vector<std::string> missing;
    for (const auto& r : records) {
      if (annotations.find(r.id) == annotations.end()) missing.push_back(r.id);
    }
    if (!missing.empty()) {
      std::string msg = "aggregate: records without covariate annotations:";
      for (const auto& id : missing) msg += " " + id;
      throw std::invalid_argument(msg);
    }
    std::map<std::string, std::map<std::string, std::vector<double>>> buckets;
    for (const auto& r : records) {
      const Covariates& cov = annotations.at(r.id);
      for (std::size_t f = 0; f < Covariates::kFieldNames.size(); ++f) {
        buckets[Covariates::kFieldNames[f]][cov.field(f)].push_back(r.iou);
      }
    }
    for (auto& [field, labels] : buckets) {
      for (auto& [label, values] : labels) {
        rep.covariate_iou[field][label] = detail::boxplot(std::move(values));
      }
    }
  }
  return rep;
}

// Plain-text table in the familiar mean±std layout, one column per method,
// metrics reported in percent.
inline std::string format_report_table(
    const std::vector<std::pair<std::string, AggregateReport>>& methods) {
  if (methods.empty()) throw std::invalid_argument("report: no methods");
  const char* rows[4] = {"Accuracy (%)", "IoU (%)", "Precision (%)", "Recall (%)"};
  auto pick = [](const AggregateReport& r, int row) -> const SummaryStat& {
    switch (row) {
      case 0: return r.accuracy;
      case 1: return r.iou;
      case 2: return r.precision;
      default: return r.recall;
    }
  };

  auto cell = [](const SummaryStat& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << 100.0 * s.mean << " ± " << std::setprecision(2)
       << 100.0 * s.stddev;
    return os.str();
  };

  std::size_t name_w = std::string("Metric").size();
  for (const char* r : rows) name_w = std::max(name_w, std::string(r).size());
  std::vector<std::size_t> col_w;
  for (const auto& [name, rep] : methods) {
    std::size_t w = name.size();
    for (int row = 0; row < 4; ++row) w = std::max(w, cell(pick(rep, row)).size());
    col_w.push_back(w);
  }

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "Metric";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    os << "  " << std::setw(static_cast<int>(col_w[m])) << methods[m].first;
  }
  os << "\n";
  os << std::string(name_w, '-');
  for (std::size_t m = 0; m < methods.size(); ++m) os << "  " << std::string(col_w[m], '-');
  os << "\n";
  for (int row = 0; row < 4; ++row) {
    os << std::left << std::setw(static_cast<int>(name_w)) << rows[row];
    for (std::size_t m = 0; m < methods.size(); ++m) {
      os << "  " << std::setw(static_cast<int>(col_w[m])) << cell(pick(methods[m].second, row));
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace earseg
