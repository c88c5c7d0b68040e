#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "biascorrect/evaluation.hpp"
#include "biascorrect/preprocess.hpp"
#include "biascorrect/volume.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace biascorrect;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "biascorrect");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string vbf(const fs::path& dir, const std::string& name) {
  return (dir / (name + ".vbf.json")).string();
}

double rms(const Volume& v, const Mask& m) {
  double s = 0.0;
  std::size_t c = 0;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (m[n]) s += static_cast<double>(v[n]) * v[n], ++c;
  }
  return std::sqrt(s / c);
}

std::vector<double> profile_values(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "position,value");
  std::vector<double> out;
  while (std::getline(in, line)) out.push_back(std::stod(line.substr(line.find(',') + 1)));
  return out;
}

}  // namespace

TEST_CASE("params file") {
  const FcmParams p = cli::params_from_json(
      {{"clusters", 2}, {"alpha", 0.5}, {"neighborhood", 8}, {"smoothing_sigma", {1, 2, 3}}, {"seed", 9}});
  CHECK(p.clusters == 2);
  CHECK(p.alpha == 0.5);
  CHECK(p.smoothing_sigma == Sigma3{1, 2, 3});
  CHECK(p.seed == 9);
  CHECK(p.fuzziness == FcmParams{}.fuzziness);
  CHECK_THROWS_WITH_AS(cli::params_from_json({{"gamma", 1}}), doctest::Contains("gamma"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(cli::params_from_json({{"alpha", "high"}}), doctest::Contains("alpha"),
                       ValidationError);
  CHECK_THROWS_AS(cli::params_from_json({{"neighborhood", 4}}), ValidationError);
  CHECK_THROWS_AS(cli::params_from_json({{"fuzziness", 0.5}}), ValidationError);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run({}) == cli::kValidation);
  CHECK(run({"bogus"}) == cli::kValidation);
  CHECK(run({"profile", "x.vbf.json"}) == cli::kValidation);
}

TEST_CASE("phantom command") {
  testing::TempDir tmp("cli_phantom");
  REQUIRE(run({"phantom", "-o", (tmp / "a").string()}) == cli::kOk);
  for (const char* name : {"truth", "labels", "mask", "bias", "observed"}) {
    CHECK(fs::exists(tmp / "a" / (std::string(name) + ".vbf.json")));
  }
  SUBCASE("deterministic") {
    REQUIRE(run({"phantom", "-o", (tmp / "b").string()}) == cli::kOk);
    for (const auto& entry : fs::directory_iterator(tmp / "a")) {
      CHECK(slurp(entry.path()) == slurp(tmp / "b" / entry.path().filename()));
    }
  }
  SUBCASE("invalid intensity ordering") {
    write(tmp / "bad.json", R"({"phantom": {"intensities": [0.5, 0.2, 0.9]}})");
    CHECK(run({"phantom", (tmp / "bad.json").string(), "-o", (tmp / "c").string()}) ==
          cli::kValidation);
  }
  SUBCASE("seed override changes noise only") {
    REQUIRE(run({"phantom", "-o", (tmp / "d").string(), "--seed", "4"}) == cli::kOk);
    CHECK(read_labels(vbf(tmp / "d", "labels")) == read_labels(vbf(tmp / "a", "labels")));
    CHECK_FALSE(read_volume(vbf(tmp / "d", "truth")) == read_volume(vbf(tmp / "a", "truth")));
  }
}

TEST_CASE("correct command I/O and determinism") {
  testing::TempDir tmp("cli_correct");
  CHECK(run({"correct", (tmp / "missing.vbf.json").string(), "-o", (tmp / "o").string()}) ==
        cli::kIo);

  write(tmp / "spec.json", R"({"phantom": {"dims": [32, 32, 6], "semi_axes": [13, 13, 2],
                                          "shell_thickness": 2, "cavity": null}})");
  REQUIRE(run({"phantom", (tmp / "spec.json").string(), "-o", (tmp / "p").string()}) == cli::kOk);
  write(tmp / "params.json", R"({"max_iters": 4})");
  const std::vector<std::string> base{"correct", vbf(tmp / "p", "observed"), "--params",
                                      (tmp / "params.json").string()};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  CHECK(with({"-o", (tmp / "o1").string(), "--threads", "1"}) == cli::kNotConverged);
  CHECK(with({"-o", (tmp / "o4").string(), "--threads", "4"}) == cli::kNotConverged);
  for (const char* name : {"corrected.raw", "bias.raw", "smoothed_bias.raw", "convergence.csv"}) {
    CHECK(slurp(tmp / "o1" / name) == slurp(tmp / "o4" / name));
  }
  std::istringstream log(slurp(tmp / "o1" / "convergence.csv"));
  std::string line;
  std::getline(log, line);
  CHECK(line == "sweep,objective,center_change");
  std::size_t rows = 0;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 4);

  CHECK(with({"-o", (tmp / "o5").string(), "--sigma", "1,1"}) == cli::kValidation);
  CHECK(with({"-o", (tmp / "o5").string(), "--sigma", "1,1,-1"}) == cli::kValidation);
}

TEST_CASE("segment and evaluate commands") {
  testing::TempDir tmp("cli_segment");
  write(tmp / "clean.json", R"({"bias": {"amplitude": 0.0}})");
  REQUIRE(run({"phantom", (tmp / "clean.json").string(), "-o", (tmp / "p").string()}) == cli::kOk);
  REQUIRE(run({"segment", vbf(tmp / "p", "observed"), "-o", (tmp / "seg").string()}) == cli::kOk);
  REQUIRE(run({"evaluate", vbf(tmp.path(), "seg"), vbf(tmp / "p", "labels"), "-o",
               (tmp / "eval.json").string()}) == cli::kOk);
  const auto report = nlohmann::json::parse(slurp(tmp / "eval.json"));
  CHECK(report["classes"]["bone"]["sensitivity"].get<double>() >= 0.99);
  CHECK(fs::exists(tmp / "eval.csv"));

  REQUIRE(run({"evaluate", vbf(tmp / "p", "labels"), vbf(tmp / "p", "labels"), "-o",
               (tmp / "self.json").string(), "--volume", vbf(tmp / "p", "truth")}) == cli::kOk);
  const auto self = nlohmann::json::parse(slurp(tmp / "self.json"));
  CHECK(self["mean_error_percent"] == 0.0);
  CHECK(self.contains("uniformity"));

  write_labels(LabelVolume(Dims{4, 4, 4}), tmp / "small");
  CHECK(run({"evaluate", vbf(tmp.path(), "small"), vbf(tmp / "p", "labels"), "-o",
             (tmp / "x.json").string()}) == cli::kValidation);

  write_volume(Volume(Dims{16, 16, 4}, Spacing{}, 0.5f), tmp / "flat");
  CHECK(run({"segment", vbf(tmp.path(), "flat"), "-o", (tmp / "flatseg").string()}) == cli::kValidation);
}

TEST_CASE("t-test over report CSVs") {
  testing::TempDir tmp("cli_ttest");
  const std::string header = eval_csv_header();
  std::ostringstream a, b;
  const std::size_t column = [&] {
    std::size_t k = 0;
    for (std::size_t pos = 0; pos < header.find("mean_error_percent"); ++pos) k += header[pos] == ',';
    return k;
  }();
  auto row = [&](double v) {
    std::string r;
    const std::size_t cols = std::count(header.begin(), header.end(), ',') + 1;
    for (std::size_t c = 0; c < cols; ++c) r += (c ? "," : "") + (c == column ? std::to_string(v) : "0");
    return r + '\n';
  };
  // Concatenated reports repeat the header line.
  for (double v : {1.0, 1.2, 0.9, 1.1}) a << header << '\n' << row(v);
  for (double v : {0.5, 0.7, 0.6, 0.4}) b << header << '\n' << row(v);
  write(tmp / "a.csv", a.str());
  write(tmp / "b.csv", b.str());
  REQUIRE(run({"evaluate", "--ttest", (tmp / "a.csv").string(), (tmp / "b.csv").string(), "-o",
               (tmp / "t.json").string()}) == cli::kOk);
  const auto t = nlohmann::json::parse(slurp(tmp / "t.json"));
  const std::vector<double> xa{1.0, 1.2, 0.9, 1.1}, xb{0.5, 0.7, 0.6, 0.4};
  CHECK(t["p"].get<double>() == doctest::Approx(two_sample_ttest(xa, xb).p).epsilon(1e-9));
  CHECK(t["n_a"] == 4);
  CHECK(t["significant_at_5pct"] == true);

  write(tmp / "bad.csv", "x,y\n1,2\n");
  CHECK(run({"evaluate", "--ttest", (tmp / "bad.csv").string(), (tmp / "b.csv").string(), "-o",
             (tmp / "u.json").string()}) == cli::kValidation);
}

TEST_CASE("profile command") {
  testing::TempDir tmp("cli_profile");
  write_volume(Volume(Dims{8, 6, 3}, Spacing{}, 0.25f), tmp / "const");
  for (const char* axis : {"x", "y", "z"}) {
    REQUIRE(run({"profile", vbf(tmp.path(), "const"), "-o", (tmp / "p.csv").string(), "--axis", axis,
                 "--index", "2"}) == cli::kOk);
    const auto values = profile_values(tmp / "p.csv");
    CHECK(values.size() == (axis[0] == 'x' ? 8u : axis[0] == 'y' ? 6u : 3u));
    CHECK(std::all_of(values.begin(), values.end(), [](double v) { return v == 0.25; }));
  }
  Volume ramp(Dims{5, 4, 2});
  for (std::size_t n = 0; n < ramp.size(); ++n) ramp[n] = static_cast<float>(n);
  write_volume(ramp, tmp / "ramp");
  REQUIRE(run({"profile", vbf(tmp.path(), "ramp"), "-o", (tmp / "r.csv").string(), "--axis", "y",
               "--index", "3", "--slice", "1"}) == cli::kOk);
  CHECK(profile_values(tmp / "r.csv") == std::vector<double>{23, 28, 33, 38});
  CHECK(run({"profile", vbf(tmp.path(), "ramp"), "-o", (tmp / "r.csv").string(), "--index", "4"}) ==
        cli::kValidation);
  CHECK(run({"profile", vbf(tmp.path(), "ramp"), "-o", (tmp / "r.csv").string(), "--index", "0",
             "--slice", "2"}) == cli::kValidation);
}

// End-to-end runs under the default alpha = 1. The solver does not settle on
// separated centers (see "Known limitations" in the README), so the
// convergence and flat-bias expectations below currently fail.
TEST_CASE("phantom observed volume converges with defaults") {
  testing::TempDir tmp("cli_default");
  REQUIRE(run({"phantom", "-o", (tmp / "p").string()}) == cli::kOk);
  CHECK(run({"correct", vbf(tmp / "p", "observed"), "-o", (tmp / "o").string()}) == cli::kOk);
}

TEST_CASE("bias-free volume yields a flat bias with defaults") {
  testing::TempDir tmp("cli_flat");
  write(tmp / "clean.json", R"({"bias": {"amplitude": 0.0}})");
  REQUIRE(run({"phantom", (tmp / "clean.json").string(), "-o", (tmp / "p").string()}) == cli::kOk);
  run({"correct", vbf(tmp / "p", "observed"), "-o", (tmp / "o").string()});
  const Volume bias = read_volume(vbf(tmp / "o", "smoothed_bias"));
  const Mask mask = read_labels(vbf(tmp / "o", "mask"));
  CHECK(rms(bias, mask) <= 1e-3);
}

TEST_CASE("corrected center row is flatter than the observed one") {
  // 2-D disk of uniform tissue; spreads are compared in normalized units.
  testing::TempDir tmp("cli_cupping");
  write(tmp / "disk.json", R"({"phantom": {"dims": [128, 128, 1], "semi_axes": [60, 60, 0],
                                          "cavity": null}})");
  REQUIRE(run({"phantom", (tmp / "disk.json").string(), "-o", (tmp / "p").string()}) == cli::kOk);
  run({"correct", vbf(tmp / "p", "observed"), "-o", (tmp / "o").string()});
  const Preprocessed pre = preprocess(read_volume(vbf(tmp / "p", "observed")));
  const LabelVolume labels = read_labels(vbf(tmp / "p", "labels"));

  REQUIRE(run({"profile", vbf(tmp / "p", "observed"), "-o", (tmp / "before.csv").string(),
               "--index", "64"}) == cli::kOk);
  REQUIRE(run({"profile", vbf(tmp / "o", "corrected"), "-o", (tmp / "after.csv").string(),
               "--index", "64"}) == cli::kOk);
  const auto before = profile_values(tmp / "before.csv");
  const auto after = profile_values(tmp / "after.csv");

  // Mean of tissue samples near the center vs near the inner rim.
  auto spread = [&](const std::vector<double>& line, double scale) {
    double center = 0.0, edge = 0.0;
    std::size_t nc = 0, ne = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (labels.at(i, 64, 0) != 1) continue;
      const double r = std::abs(static_cast<double>(i) - 63.5) / 60.0;
      if (r <= 0.2) center += line[i] * scale, ++nc;
      if (r >= 0.8) edge += line[i] * scale, ++ne;
    }
    REQUIRE(nc > 0);
    REQUIRE(ne > 0);
    return std::abs(edge / ne - center / nc);
  };
  const double s0 = spread(before, pre.normalized.scale);
  const double s1 = spread(after, 1.0);
  CAPTURE(s0);
  CAPTURE(s1);
  CHECK(s1 < s0);
}
