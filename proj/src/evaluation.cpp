#include "biascorrect/evaluation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>

namespace biascorrect {

namespace {

constexpr std::array<const char*, kMaterialCount> kMaterialNames{"air", "tissue", "bone"};

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream out;
  out.precision(17);
  out << *v;
  return out.str();
}

}  // namespace

void validate_labels(const LabelVolume& labels) {
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= kMaterialCount) {
      throw ValidationError("label " + std::to_string(labels[n]) + " at voxel " +
                            std::to_string(n) + " is not air/tissue/bone");
    }
  }
}

MaterialUniformity material_uniformity(const Volume& v, const LabelVolume& truth) {
  return material_uniformity(v, truth, full_mask(v.dims()));
}

MaterialUniformity material_uniformity(const Volume& v, const LabelVolume& truth, const Mask& mask) {
  require_same_dims(v.dims(), truth.dims(), "volume vs truth labels");
  require_same_dims(v.dims(), mask.dims(), "volume vs mask");
  validate_labels(truth);

  std::array<std::size_t, kMaterialCount> count{};
  std::array<double, kMaterialCount> sum{};
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!mask[n]) continue;
    ++count[truth[n]];
    sum[truth[n]] += v[n];
  }
  std::array<double, kMaterialCount> mean{};
  for (std::size_t m = 0; m < kMaterialCount; ++m) {
    if (count[m] > 0) mean[m] = sum[m] / static_cast<double>(count[m]);
  }
  // Second pass around the mean; translation invariant up to rounding.
  std::array<double, kMaterialCount> squares{};
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!mask[n]) continue;
    const double d = v[n] - mean[truth[n]];
    squares[truth[n]] += d * d;
  }

  MaterialUniformity out;
  for (std::size_t m = 0; m < kMaterialCount; ++m) {
    if (count[m] == 0) continue;
    UniformityStats s;
    s.count = count[m];
    s.mean = mean[m];
    s.std = std::sqrt(squares[m] / static_cast<double>(count[m]));
    if (s.mean > 0.0) s.cov_percent = 100.0 * s.std / s.mean;
    out[m] = s;
  }
  return out;
}

ConfusionReport confusion_metrics(const LabelVolume& pred, const LabelVolume& truth) {
  return confusion_metrics(pred, truth, full_mask(truth.dims()));
}

ConfusionReport confusion_metrics(const LabelVolume& pred, const LabelVolume& truth,
                                  const Mask& mask) {
  require_same_dims(pred.dims(), truth.dims(), "predicted vs truth labels");
  require_same_dims(truth.dims(), mask.dims(), "labels vs mask");
  validate_labels(pred);
  validate_labels(truth);

  ConfusionReport r;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (!mask[n]) continue;
    ++r.voxels;
    if (pred[n] != truth[n]) ++r.misclassified;
    for (std::size_t m = 0; m < kMaterialCount; ++m) {
      const bool is_truth = truth[n] == m;
      const bool is_pred = pred[n] == m;
      auto& c = r.classes[m];
      if (is_truth && is_pred) ++c.true_positive;
      if (is_truth && !is_pred) ++c.false_negative;
      if (!is_truth && !is_pred) ++c.true_negative;
      if (!is_truth && is_pred) ++c.false_positive;
    }
  }
  for (auto& c : r.classes) {
    if (c.true_positive + c.false_negative > 0) {
      c.sensitivity = static_cast<double>(c.true_positive) /
                      static_cast<double>(c.true_positive + c.false_negative);
    }
    if (c.true_negative + c.false_positive > 0) {
      c.specificity = static_cast<double>(c.true_negative) /
                      static_cast<double>(c.true_negative + c.false_positive);
    }
  }
  if (r.voxels > 0) {
    r.mean_error_percent =
        100.0 * static_cast<double>(r.misclassified) / static_cast<double>(r.voxels);
  }
  return r;
}

TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("t-test needs at least two values per sample");
  }
  auto moments = [](std::span<const double> x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss};
  };
  const auto [mean_a, ss_a] = moments(a);
  const auto [mean_b, ss_b] = moments(b);
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());

  TTestResult r;
  r.dof = na + nb - 2.0;
  const double pooled = (ss_a + ss_b) / r.dof;
  if (pooled == 0.0) {
    r.degenerate = true;
    if (mean_a == mean_b) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean_a - mean_b);
      r.p = 0.0;
      r.significant_at_5pct = true;
    }
    return r;
  }
  r.t = (mean_a - mean_b) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  // P(|T| > |t|) = I_{dof / (dof + t^2)}(dof / 2, 1 / 2).
  r.p = boost::math::ibeta(0.5 * r.dof, 0.5, r.dof / (r.dof + r.t * r.t));
  r.significant_at_5pct = r.p < 0.05;
  return r;
}

std::vector<std::size_t> bone_per_slice(const LabelVolume& labels) {
  const Dims& d = labels.dims();
  std::vector<std::size_t> counts(d.nz, 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] == static_cast<std::uint8_t>(Material::kBone)) ++counts[n / d.slice_size()];
  }
  return counts;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  const auto& c = report.confusion;
  j["voxels"] = c.voxels;
  j["misclassified"] = c.misclassified;
  j["mean_error_percent"] = c.mean_error_percent;
  for (std::size_t m = 0; m < kMaterialCount; ++m) {
    const auto& k = c.classes[m];
    j["classes"][kMaterialNames[m]] = {
        {"true_positive", k.true_positive},   {"false_negative", k.false_negative},
        {"true_negative", k.true_negative},   {"false_positive", k.false_positive},
        {"sensitivity", optional_number(k.sensitivity)},
        {"specificity", optional_number(k.specificity)}};
  }
  if (report.uniformity) {
    for (std::size_t m = 0; m < kMaterialCount; ++m) {
      const auto& u = (*report.uniformity)[m];
      if (!u) {
        j["uniformity"][kMaterialNames[m]] = nullptr;
        continue;
      }
      j["uniformity"][kMaterialNames[m]] = {{"count", u->count},
                                            {"mean", u->mean},
                                            {"std", u->std},
                                            {"cov_percent", optional_number(u->cov_percent)}};
    }
  }
  j["bone_count_per_slice"] = report.bone_count_per_slice;
  if (report.ttest) {
    const auto& t = *report.ttest;
    j["ttest"] = {{"t", std::isfinite(t.t) ? nlohmann::json(t.t) : nlohmann::json(nullptr)},
                  {"dof", t.dof},
                  {"p", t.p},
                  {"significant_at_5pct", t.significant_at_5pct},
                  {"degenerate", t.degenerate}};
  }
  return j;
}

std::string eval_csv_header() {
  std::string h = "mean_error_percent";
  for (const char* m : kMaterialNames) h += std::string(",sensitivity_") + m;
  for (const char* m : kMaterialNames) h += std::string(",specificity_") + m;
  for (const char* m : kMaterialNames) h += std::string(",std_") + m;
  for (const char* m : kMaterialNames) h += std::string(",cov_percent_") + m;
  return h;
}

std::string eval_csv_row(const EvalReport& report) {
  std::string row = csv_number(report.confusion.mean_error_percent);
  for (const auto& c : report.confusion.classes) row += "," + csv_number(c.sensitivity);
  for (const auto& c : report.confusion.classes) row += "," + csv_number(c.specificity);
  for (std::size_t m = 0; m < kMaterialCount; ++m) {
    std::optional<double> v;
    if (report.uniformity && (*report.uniformity)[m]) v = (*report.uniformity)[m]->std;
    row += "," + csv_number(v);
  }
  for (std::size_t m = 0; m < kMaterialCount; ++m) {
    std::optional<double> v;
    if (report.uniformity && (*report.uniformity)[m]) v = (*report.uniformity)[m]->cov_percent;
    row += "," + csv_number(v);
  }
  return row;
}

}  // namespace biascorrect
