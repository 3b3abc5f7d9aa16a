#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rpnet/harness.hpp"
#include "rpnet/rng.hpp"
#include "support/fd_cases.hpp"

using namespace rpnet;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("harness");

namespace {

// Small untrained encoded bundle; attacks and sweeps only need consistency.
ModelBundle toy_bundle(uint64_t seed) {
  ModelBundle b;
  b.spec.input_height = 2;
  b.spec.input_width = 2;
  b.spec.input_channels = 3;
  b.spec.conv1_filters = 0;
  b.spec.conv2_filters = 0;
  b.spec.dense_units = 0;
  b.spec.num_classes = 3;
  b.spec.profile_name = "toy";
  b.pipeline = pipeline_from_name("none", 3);
  b.params = init_parameters(b.spec, seed);
  return b;
}

Dataset toy_dataset(uint64_t seed, int n) {
  Rng rng(seed);
  Dataset ds;
  ds.images = testing::random_tensor(rng, {n, 1, 2, 2}, 0.0f, 1.0f);
  for (int i = 0; i < n; ++i) ds.labels.push_back(rng.uniform_int(3));
  return ds;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string strip_seconds_column(const std::string& csv) {
  std::string out;
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line)) {
    const size_t comma = line.rfind(',');
    out += line.substr(0, comma) + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("alpha ratio reproduces the reference pairs") {
  auto a = alpha_ratio(99.43, 98.65);
  REQUIRE(a.has_value());
  CHECK(std::fabs(*a - 49.80) <= 0.01);
  auto b = alpha_ratio(99.47, 98.61);
  REQUIRE(b.has_value());
  CHECK(std::fabs(*b - 49.78) <= 0.01);
  CHECK(*alpha_ratio(50.0, 0.0) == doctest::Approx(0.0));
  CHECK(!alpha_ratio(0.0, 0.0).has_value());
}

TEST_CASE("alpha symmetry") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(0.0f, 100.0f);
    const double y = rng.uniform(0.1f, 100.0f);
    CHECK(std::fabs(*alpha_ratio(x, y) + *alpha_ratio(y, x) - 100.0) <= 1e-6);
  }
}

TEST_CASE("a constant-class model scores the class prior") {
  ModelBundle b = toy_bundle(1);
  b.params.tensors["dense2.weight"] = Tensor({12, 3});
  b.params.tensors["dense2.bias"] = Tensor({3});  // all logits equal -> class 0
  Dataset ds = toy_dataset(2, 300);
  int zeros = 0;
  for (int32_t l : ds.labels) zeros += l == 0;
  const double want = 100.0 * zeros / 300.0;
  CHECK(clean_accuracy(b.spec, b.params, b.pipeline, true, ds, 50) == doctest::Approx(want));
}

TEST_CASE("duplicating the dataset keeps accuracy unchanged") {
  ModelBundle b = toy_bundle(3);
  Dataset ds = toy_dataset(5, 100);
  Dataset dup;
  dup.images = Tensor({200, 1, 2, 2});
  for (int64_t i = 0; i < ds.images.numel(); ++i) {
    dup.images[i] = ds.images[i];
    dup.images[ds.images.numel() + i] = ds.images[i];
  }
  dup.labels = ds.labels;
  dup.labels.insert(dup.labels.end(), ds.labels.begin(), ds.labels.end());
  const double a = clean_accuracy(b.spec, b.params, b.pipeline, true, ds, 100);
  const double d = clean_accuracy(b.spec, b.params, b.pipeline, true, dup, 100);
  CHECK(a == doctest::Approx(d));
}

TEST_CASE("epsilon sweep at zero equals clean accuracy and validates ordering") {
  ModelBundle b = toy_bundle(7);
  Dataset ds = toy_dataset(8, 60);
  AttackConfig cfg;
  cfg.levels = 3;
  std::vector<SweepRow> rows = epsilon_sweep(b, ds, {0.0}, cfg, 11, 30);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].report.attacked_accuracy == doctest::Approx(rows[0].report.clean_accuracy));
  CHECK_THROWS_AS(epsilon_sweep(b, ds, {0.3, 0.1}, cfg, 11, 30), ConfigError);
}

TEST_CASE("batch size sweep recomputes statistics per size") {
  ModelBundle b = toy_bundle(9);
  b.pipeline = pipeline_from_name("tanh+bn", 3);
  Dataset ds = toy_dataset(10, 40);
  AttackConfig cfg;
  cfg.levels = 3;
  cfg.epsilon = 0.2f;
  std::vector<SweepRow> rows = batch_size_sweep(b, ds, {1, 20, 40}, cfg, 13);
  REQUIRE(rows.size() == 3);
  for (const SweepRow& r : rows) {
    CHECK(r.param == "batch-size");
    CHECK(r.report.clean_accuracy >= 0.0);
    CHECK(r.report.clean_accuracy <= 100.0);
  }
  // size 1 degenerates to per-image normalization and generally differs
  CHECK(rows[0].value == doctest::Approx(1.0));
}

TEST_CASE("csv header is byte exact and values round trip") {
  ModelBundle b = toy_bundle(15);
  Dataset ds = toy_dataset(16, 30);
  AttackConfig cfg;
  cfg.levels = 3;
  std::vector<SweepRow> rows = epsilon_sweep(b, ds, {0.0, 0.25}, cfg, 17, 30);
  const std::string csv = report_csv(rows);

  std::stringstream ss(csv);
  std::string header;
  std::getline(ss, header);
  CHECK(header ==
        "param,value,pipeline,adv_trained,clean_acc,attacked_acc,alpha,epsilon,delta,xi,steps,"
        "restarts,seed,seconds");

  std::string line;
  size_t i = 0;
  while (std::getline(ss, line)) {
    const std::vector<std::string> f = split_csv_line(line);
    REQUIRE(f.size() == 14);
    CHECK(f[0] == "epsilon");
    CHECK(std::stod(f[1]) == doctest::Approx(rows[i].value).epsilon(1e-4));
    CHECK(f[2] == "none");
    CHECK(std::stod(f[4]) == doctest::Approx(rows[i].report.clean_accuracy).epsilon(1e-4));
    CHECK(std::stod(f[5]) == doctest::Approx(rows[i].report.attacked_accuracy).epsilon(1e-4));
    CHECK(std::stoi(f[10]) == rows[i].report.attack.steps);
    ++i;
  }
  CHECK(i == rows.size());
}

TEST_CASE("json report parses and mirrors the csv keys") {
  ModelBundle b = toy_bundle(19);
  Dataset ds = toy_dataset(20, 30);
  AttackConfig cfg;
  cfg.levels = 3;
  std::vector<SweepRow> rows = epsilon_sweep(b, ds, {0.1}, cfg, 21, 30);
  const nlohmann::json parsed = nlohmann::json::parse(report_json(rows));
  REQUIRE(parsed.is_array());
  REQUIRE(parsed.size() == 1);
  for (const char* key : {"param", "value", "pipeline", "adv_trained", "clean_acc", "attacked_acc",
                          "alpha", "epsilon", "delta", "xi", "steps", "restarts", "seed", "seconds"})
    CHECK(parsed[0].contains(key));
  CHECK(parsed[0]["param"] == "epsilon");
}

TEST_CASE("reports are deterministic apart from the seconds column") {
  ModelBundle b = toy_bundle(23);
  Dataset ds = toy_dataset(24, 40);
  AttackConfig cfg;
  cfg.levels = 3;
  cfg.epsilon = 0.3f;
  const std::string a = report_csv(epsilon_sweep(b, ds, {0.1, 0.3}, cfg, 25, 20));
  const std::string c = report_csv(epsilon_sweep(b, ds, {0.1, 0.3}, cfg, 25, 20));
  CHECK(strip_seconds_column(a) == strip_seconds_column(c));
}

TEST_CASE("emit_report writes csv or json by format") {
  ModelBundle b = toy_bundle(27);
  Dataset ds = toy_dataset(28, 20);
  AttackConfig cfg;
  cfg.levels = 3;
  std::vector<SweepRow> rows = epsilon_sweep(b, ds, {0.2}, cfg, 29, 20);
  const fs::path dir = fs::temp_directory_path();
  emit_report(rows, ReportFormat::Csv, (dir / "rpnet_report.csv").string());
  emit_report(rows, ReportFormat::Json, (dir / "rpnet_report.json").string());
  std::ifstream csv(dir / "rpnet_report.csv");
  std::string first;
  std::getline(csv, first);
  CHECK(first.rfind("param,", 0) == 0);
  std::ifstream json_in(dir / "rpnet_report.json");
  CHECK(nlohmann::json::parse(json_in).is_array());
  CHECK(report_format_for_path("x.csv") == ReportFormat::Csv);
  CHECK(report_format_for_path("x.json") == ReportFormat::Json);
  CHECK_THROWS_AS(report_format_for_path("x.txt"), ConfigError);
}

TEST_CASE("histogram of the identity pipeline matches the raw histogram") {
  Dataset ds;
  ds.images = Tensor({1, 1, 2, 2}, {0.0f, 1.0f, 128.0f / 255.0f, 64.0f / 255.0f});
  ds.labels = {0};
  auto [before, after] = pixel_histogram(ds, pipeline_from_name("none"), 1);
  CHECK(before.bins == after.bins);
  CHECK(before.stddev == doctest::Approx(after.stddev));
  CHECK(before.bins[0] == 1);
  CHECK(before.bins[255] == 1);
  CHECK(before.bins[128] == 1);
  CHECK(before.bins[64] == 1);
}

TEST_CASE("histogram bins sum to the pixel count on both sides") {
  Dataset ds = make_synthetic_digits(50, 31);
  auto [before, after] = pixel_histogram(ds, pipeline_from_name("all-three"), 25);
  int64_t bsum = 0, asum = 0;
  for (int64_t c : before.bins) bsum += c;
  for (int64_t c : after.bins) asum += c;
  CHECK(bsum == 50 * 28 * 28);
  CHECK(asum == 50 * 28 * 28);
}

TEST_CASE("robust processing spreads the pixel distribution") {
  Dataset ds = make_synthetic_digits(200, 33);
  auto [before, after] = pixel_histogram(ds, pipeline_from_name("all-three"), 100);
  CHECK(after.stddev / before.stddev >= 2.0);
}

TEST_SUITE_END();
