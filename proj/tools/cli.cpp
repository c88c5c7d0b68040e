#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "biascorrect/error.hpp"
#include "biascorrect/evaluation.hpp"
#include "biascorrect/phantom.hpp"
#include "biascorrect/preprocess.hpp"
#include "biascorrect/thresholding.hpp"
#include "biascorrect/volume.hpp"

namespace biascorrect::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "biascorrect: " << msg << '\n'; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

template <typename T>
T field(const json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("params.") + name + ": wrong type");
  }
}

// Shared flags; unset options leave the params file (or defaults) alone.
struct Common {
  std::string params_file;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::vector<double> sigma;

  void attach(CLI::App* app) {
    app->add_option("--params", params_file, "solver params JSON")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "random seed");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
    app->add_option("--sigma", sigma, "bias smoothing sigma x,y,z in voxels")
        ->delimiter(',')
        ->expected(3);
  }

  FcmParams params() const {
    FcmParams p = params_file.empty() ? FcmParams{} : params_from_json(read_json(params_file));
    if (seed) p.seed = *seed;
    if (sigma.size() == 3) p.smoothing_sigma = {sigma[0], sigma[1], sigma[2]};
    if (threads) {
      p.threads = *threads;
    } else if (const char* env = std::getenv("BIASCORRECT_THREADS")) {
      try {
        p.threads = static_cast<unsigned>(std::stoul(env));
      } catch (const std::exception&) {
        throw ValidationError(std::string("BIASCORRECT_THREADS: not a count: ") + env);
      }
    } else {
      p.threads = 0;
    }
    p.validate();
    return p;
  }
};

int cmd_phantom(const std::string& spec_file, const fs::path& out, const Common& common) {
  const json j = spec_file.empty() ? json::object() : read_json(spec_file);
  PhantomSpec spec = phantom_spec_from_json(j.value("phantom", json::object()));
  BiasSpec bias = bias_spec_from_json(j.value("bias", json::object()));
  if (common.seed) spec.seed = bias.seed = *common.seed;

  const Phantom ph = make_phantom(spec);
  const Volume field = make_bias(bias, spec.dims, ph.mask, spec.spacing);
  const Volume observed = corrupt(ph.truth, field);

  ensure_dir(out);
  write_volume(ph.truth, out / "truth");
  write_labels(ph.labels, out / "labels", spec.spacing);
  write_labels(ph.mask, out / "mask", spec.spacing);
  write_volume(field, out / "bias");
  write_volume(observed, out / "observed");
  std::ostringstream msg;
  msg << "phantom: bias " << to_string(bias.kind) << " amplitude " << bias.amplitude << ", seed "
      << spec.seed;
  log(msg.str());
  return kOk;
}

int cmd_correct(const fs::path& in, const fs::path& out, const Common& common) {
  const FcmParams params = common.params();
  const Volume raw = read_volume(in);
  const Preprocessed pre = preprocess(raw);

  std::ostringstream trace;
  trace << "sweep,objective,center_change\n";
  trace.precision(17);
  const CorrectionResult r =
      solve(pre.normalized.volume, pre.mask, params, [&](const SweepReport& rep, const FcmState&) {
        trace << rep.sweep << ',' << rep.objective << ',' << rep.center_change << '\n';
      });

  ensure_dir(out);
  write_volume(r.corrected, out / "corrected");
  write_volume(r.bias, out / "bias");
  write_volume(r.smoothed_bias, out / "smoothed_bias");
  write_labels(pre.mask, out / "mask", raw.spacing());
  write_text(out / "convergence.csv", trace.str());

  std::ostringstream msg;
  msg << "correct: " << (r.converged ? "converged" : "stopped at max_iters") << " after "
      << r.state.sweep << " sweeps; centers";
  for (double c : r.state.centers) msg << ' ' << c;
  log(msg.str());
  return r.converged ? kOk : kNotConverged;
}

int cmd_segment(const fs::path& in, const fs::path& out) {
  const Volume v = read_volume(in);
  const Preprocessed pre = preprocess(v);
  write_labels(segment(pre.normalized.volume, pre.mask, kMaterialCount), out, v.spacing());
  return kOk;
}

std::vector<double> mean_errors(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  std::string line;
  std::optional<std::size_t> column;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    // Header lines (possibly repeated when reports are concatenated).
    const auto it = std::find(cells.begin(), cells.end(), "mean_error_percent");
    if (it != cells.end()) {
      column = static_cast<std::size_t>(it - cells.begin());
      continue;
    }
    if (!column || *column >= cells.size()) {
      throw ValidationError(csv.string() + ": no mean_error_percent column");
    }
    try {
      values.push_back(std::stod(cells[*column]));
    } catch (const std::exception&) {
      throw ValidationError(csv.string() + ": bad value '" + cells[*column] + "'");
    }
  }
  return values;
}

int cmd_ttest(const std::vector<std::string>& inputs, const fs::path& out) {
  const auto a = mean_errors(inputs[0]);
  const auto b = mean_errors(inputs[1]);
  const TTestResult t = two_sample_ttest(a, b);
  const json j = {{"n_a", a.size()},
                  {"n_b", b.size()},
                  {"t", t.t},
                  {"dof", t.dof},
                  {"p", t.p},
                  {"significant_at_5pct", t.significant_at_5pct},
                  {"degenerate", t.degenerate}};
  write_text(out, j.dump(2) + '\n');
  std::ostringstream msg;
  msg << "ttest: t = " << t.t << ", p = " << t.p;
  log(msg.str());
  return kOk;
}

int cmd_evaluate(const std::vector<std::string>& inputs, const fs::path& out, bool ttest,
                 const std::string& volume, const std::string& mask) {
  if (ttest) return cmd_ttest(inputs, out);
  const LabelVolume pred = read_labels(inputs[0]);
  const LabelVolume truth = read_labels(inputs[1]);
  EvalReport rep;
  if (mask.empty()) {
    rep.confusion = confusion_metrics(pred, truth);
  } else {
    rep.confusion = confusion_metrics(pred, truth, read_labels(mask));
  }
  rep.bone_count_per_slice = bone_per_slice(pred);
  if (!volume.empty()) {
    const Volume v = read_volume(volume);
    rep.uniformity = mask.empty() ? material_uniformity(v, truth)
                                  : material_uniformity(v, truth, read_labels(mask));
  }
  write_text(out, to_json(rep).dump(2) + '\n');
  fs::path csv = out;
  csv.replace_extension(".csv");
  write_text(csv, eval_csv_header() + '\n' + eval_csv_row(rep) + '\n');
  return kOk;
}

int cmd_profile(const fs::path& in, const fs::path& out, char axis, long long index,
                std::optional<long long> slice) {
  const Volume v = read_volume(in);
  const Dims& d = v.dims();
  // The line runs along `axis`; `index` fixes the first perpendicular
  // coordinate and `slice` the second (default: its center).
  const std::size_t length = axis == 'x' ? d.nx : axis == 'y' ? d.ny : d.nz;
  const std::size_t first = axis == 'x' ? d.ny : d.nx;
  const std::size_t second = axis == 'z' ? d.ny : d.nz;
  const long long s = slice.value_or(static_cast<long long>(second / 2));
  if (index < 0 || static_cast<std::size_t>(index) >= first) {
    throw ValidationError("profile index " + std::to_string(index) + " outside [0, " +
                          std::to_string(first) + ")");
  }
  if (s < 0 || static_cast<std::size_t>(s) >= second) {
    throw ValidationError("profile slice " + std::to_string(s) + " outside [0, " +
                          std::to_string(second) + ")");
  }
  const auto a = static_cast<std::size_t>(index), b = static_cast<std::size_t>(s);
  std::ostringstream csv;
  csv.precision(9);
  csv << "position,value\n";
  for (std::size_t t = 0; t < length; ++t) {
    const float value = axis == 'x' ? v.at(t, a, b) : axis == 'y' ? v.at(a, t, b) : v.at(a, b, t);
    csv << t << ',' << value << '\n';
  }
  write_text(out, csv.str());
  return kOk;
}

}  // namespace

FcmParams params_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("params: expected a JSON object");
  FcmParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "clusters") {
      p.clusters = field<std::size_t>(j, "clusters");
    } else if (key == "fuzziness") {
      p.fuzziness = field<double>(j, "fuzziness");
    } else if (key == "alpha") {
      p.alpha = field<double>(j, "alpha");
    } else if (key == "neighborhood") {
      if (field<std::size_t>(j, "neighborhood") != kNeighborhoodSize) {
        throw ValidationError("params.neighborhood: only the in-slice 8-neighborhood is supported");
      }
    } else if (key == "epsilon") {
      p.epsilon = field<double>(j, "epsilon");
    } else if (key == "max_iters") {
      p.max_iters = field<std::size_t>(j, "max_iters");
    } else if (key == "seed") {
      p.seed = field<std::uint64_t>(j, "seed");
    } else if (key == "smoothing_sigma") {
      const auto s = field<std::vector<double>>(j, "smoothing_sigma");
      if (s.size() != 3) throw ValidationError("params.smoothing_sigma: expected [x, y, z]");
      p.smoothing_sigma = {s[0], s[1], s[2]};
    } else {
      throw ValidationError("params." + key + ": unknown field");
    }
  }
  p.validate();
  return p;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"CBCT shading correction with bias-corrected fuzzy C-means"};
  app.require_subcommand(1);

  Common common;
  std::string spec_file, input, output, volume, mask;
  std::vector<std::string> inputs;
  bool ttest = false;
  char axis = 'x';
  long long index = 0;
  std::optional<long long> slice;

  auto* phantom = app.add_subcommand("phantom", "generate a phantom, its bias field and observed volume");
  phantom->add_option("spec", spec_file, "PhantomSpec/BiasSpec JSON ({} for defaults)");
  phantom->add_option("-o,--out", output, "output directory")->required();
  phantom->add_option("--seed", common.seed, "override phantom and bias seeds");

  auto* correct = app.add_subcommand("correct", "preprocess, estimate and remove the bias field");
  correct->add_option("input", input, "observed volume (.vbf.json)")->required();
  correct->add_option("-o,--out", output, "output directory")->required();
  common.attach(correct);

  auto* seg = app.add_subcommand("segment", "preprocess and 3-class Otsu segmentation");
  seg->add_option("input", input, "volume (.vbf.json)")->required();
  seg->add_option("-o,--out", output, "output label volume")->required();

  auto* evaluate = app.add_subcommand("evaluate", "segmentation metrics, or a t-test over reports");
  evaluate->add_option("inputs", inputs, "PRED TRUTH labels, or two report CSVs with --ttest")
      ->required()
      ->expected(2);
  evaluate->add_option("-o,--out", output, "output JSON (CSV written alongside)")->required();
  evaluate->add_option("--volume", volume, "intensity volume for per-material uniformity");
  evaluate->add_option("--mask", mask, "restrict metrics to this mask");
  evaluate->add_flag("--ttest", ttest, "compare mean_error_percent columns of two CSVs");

  auto* profile = app.add_subcommand("profile", "dump a 1-D intensity line as CSV");
  profile->add_option("input", input, "volume (.vbf.json)")->required();
  profile->add_option("-o,--out", output, "output CSV")->required();
  profile->add_option("--axis", axis, "line direction")->check(CLI::IsMember({'x', 'y', 'z'}));
  profile->add_option("--index", index, "first perpendicular coordinate")->required();
  profile->add_option("--slice", slice, "second perpendicular coordinate (default: center)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*phantom) return cmd_phantom(spec_file, output, common);
    if (*correct) return cmd_correct(input, output, common);
    if (*seg) return cmd_segment(input, output);
    if (*evaluate) return cmd_evaluate(inputs, output, ttest, volume, mask);
    if (*profile) return cmd_profile(input, output, axis, index, slice);
  } catch (const IoError& e) {
    log(e.what());
    return kIo;
  } catch (const ValidationError& e) {
    log(e.what());
    return kValidation;
  }
  return kValidation;
}

}  // namespace biascorrect::cli
