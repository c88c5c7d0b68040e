#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "biascorrect/volume.hpp"

namespace biascorrect {

struct UniformityStats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;                   // population standard deviation
  std::optional<double> cov_percent;  // 100 * std / mean, absent unless mean > 0
};

/// Per material, indexed by label. Absent when the material has no voxels.
using MaterialUniformity = std::array<std::optional<UniformityStats>, kMaterialCount>;

MaterialUniformity material_uniformity(const Volume& v, const LabelVolume& truth);
MaterialUniformity material_uniformity(const Volume& v, const LabelVolume& truth, const Mask& mask);

struct ClassMetrics {
  std::size_t true_positive = 0;
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
  std::size_t false_positive = 0;
  std::optional<double> sensitivity;  // TP / (TP + FN)
  std::optional<double> specificity;  // TN / (TN + FP)
};

struct ConfusionReport {
  std::array<ClassMetrics, kMaterialCount> classes;
  std::size_t voxels = 0;
  std::size_t misclassified = 0;
  double mean_error_percent = 0.0;
};

/// One-vs-rest confusion for air, tissue and bone over the masked voxels.
ConfusionReport confusion_metrics(const LabelVolume& pred, const LabelVolume& truth);
ConfusionReport confusion_metrics(const LabelVolume& pred, const LabelVolume& truth,
                                  const Mask& mask);

struct TTestResult {
  double t = 0.0;
  double dof = 0.0;
  double p = 1.0;  // two-sided
  bool significant_at_5pct = false;
  bool degenerate = false;  // zero pooled variance
};

/// Pooled-variance two-sample Student t-test. Each sample needs >= 2 values.
TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b);

/// Count of bone voxels per z-slice, lowest slice first.
std::vector<std::size_t> bone_per_slice(const LabelVolume& labels);

/// Throws ValidationError if any label is outside {0, 1, 2}.
void validate_labels(const LabelVolume& labels);

struct EvalReport {
  ConfusionReport confusion;
  std::optional<MaterialUniformity> uniformity;
  std::vector<std::size_t> bone_count_per_slice;
  std::optional<TTestResult> ttest;
};

nlohmann::json to_json(const EvalReport& report);

std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& report);

}  // namespace biascorrect
