// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Runs at CI scale (fast profile, 10k training subset) against the
// bundled synthetic digit corpus, or against real MNIST when RPNET_DATA_DIR
// (or --data-dir) points at the IDX files. --full switches the training
// criteria to the full-scale protocol (paper profile, full train split).

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rpnet/checkpoint.hpp"
#include "rpnet/harness.hpp"
#include "rpnet/rng.hpp"
#include "rpnet/trainer.hpp"

#include "../support/fd_cases.hpp"

using namespace rpnet;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

struct Scale {
  std::string profile = "fast";
  int train_count = 10000;
  int epochs = 3;
  int attack_eval_count = 1000;
  double clean_floor = 97.0;       // criterion 1
  double runtime_budget_s = 1800;  // criterion 1, single worker
};

struct Data {
  Dataset train;
  Dataset test;
  bool real_mnist = false;
};

Data load_data(const std::string& dir) {
  Data data;
  if (!dir.empty()) {
    MnistData m = load_mnist_dir(dir);
    data.train = std::move(m.train);
    data.test = std::move(m.test);
    data.real_mnist = true;
    std::printf("data: MNIST from %s (%d train / %d test)\n", dir.c_str(), data.train.count(),
                data.test.count());
  } else {
    data.train = make_synthetic_digits(12000, 2024);
    data.test = make_synthetic_digits(10000, 4048);
    std::printf("data: synthetic digits (12000 train / 10000 test)\n");
  }
  std::fflush(stdout);
  return data;
}

struct TrainedModels {
  ModelBundle all_three;
  ModelBundle none;
  ModelBundle adv;
  double train_all_three_seconds = 0;
};

AttackConfig paper_attack() {
  AttackConfig cfg;
  cfg.epsilon = 0.3f;
  cfg.delta = 1.2f;
  cfg.xi = 1.0f;
  cfg.steps = 7;
  cfg.levels = 15;
  cfg.restarts = 1;
  return cfg;
}

ModelBundle train_bundle(const Dataset& train_set, const std::string& pipeline_name_,
                         const Scale& scale, bool adversarial, uint64_t seed) {
  ModelBundle bundle;
  bundle.pipeline = pipeline_from_name(pipeline_name_);
  bundle.spec = make_model_spec(scale.profile, bundle.pipeline.levels);
  bundle.encoded = true;
  bundle.adv_trained = adversarial;
  TrainConfig cfg;
  cfg.epochs = scale.epochs;
  cfg.batch_size = 100;
  cfg.seed = seed;
  cfg.adversarial = adversarial;
  cfg.adv_fraction = 0.5f;
  cfg.attack = paper_attack();
  bundle.params = train(train_set, bundle.pipeline, true, bundle.spec, cfg).params;
  return bundle;
}

}  // namespace

int main(int argc, char** argv) {
  std::string data_dir;
  bool full = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--data-dir") == 0 && i + 1 < argc)
      data_dir = argv[++i];
    else if (std::strcmp(argv[i], "--full") == 0)
      full = true;
    else {
      std::fprintf(stderr, "usage: rpnet_acceptance [--data-dir DIR] [--full]\n");
      return 2;
    }
  }
  if (data_dir.empty())
    if (const char* env = std::getenv("RPNET_DATA_DIR")) data_dir = env;

  Scale scale;
  if (full) {
    scale.profile = "paper";
    scale.train_count = 55000;
    scale.epochs = 5;
    scale.attack_eval_count = 10000;
    scale.clean_floor = 98.5;
    scale.runtime_budget_s = 4 * 3600;
  }

  const Data data = load_data(data_dir);
  const Dataset train_set =
      data.train.count() > scale.train_count ? subset(data.train, scale.train_count, 7) : data.train;
  const Dataset attack_eval = slice(data.test, 0, std::min(scale.attack_eval_count, data.test.count()));
  const AttackConfig attack = paper_attack();
  const uint64_t eval_seed = 7;

  TrainedModels models;

  // --- Criterion 1: clean accuracy of the full defense, single worker ----
  {
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    const double t0 = now_s();
    models.all_three = train_bundle(train_set, "all-three", scale, false, 7);
    models.train_all_three_seconds = now_s() - t0;
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
    const double acc = clean_accuracy(models.all_three.spec, models.all_three.params,
                                      models.all_three.pipeline, true, data.test, 100);
    const bool pass =
        acc >= scale.clean_floor && models.train_all_three_seconds <= scale.runtime_budget_s;
    report(1, pass,
           fmt("all-three clean accuracy %.2f%% (floor %.1f%%), trained in %.0f s single worker "
               "(budget %.0f s)",
               acc, scale.clean_floor, models.train_all_three_seconds, scale.runtime_budget_s));
  }

  // --- Criterion 2: defense effect without adversarial training ----------
  double all_three_attacked = 0.0;
  {
    models.none = train_bundle(train_set, "none", scale, false, 7);
    const double none_attacked =
        attack_accuracy(models.none.spec, models.none.params, models.none.pipeline, attack_eval,
                        attack, eval_seed, 100);
    all_three_attacked =
        attack_accuracy(models.all_three.spec, models.all_three.params, models.all_three.pipeline,
                        attack_eval, attack, eval_seed, 100);
    const double gap = all_three_attacked - none_attacked;
    const bool pass = none_attacked <= 30.0 && all_three_attacked >= 75.0 && gap >= 45.0;
    report(2, pass,
           fmt("LS-PGA eps=0.3: encoding-only %.2f%% (<= 30), all-three %.2f%% (>= 75), gap %.1f "
               "(>= 45)",
               none_attacked, all_three_attacked, gap));
  }

  // --- Criterion 3: adversarial training improvement ---------------------
  {
    models.adv = train_bundle(train_set, "all-three", scale, true, 7);
    const double adv_attacked = attack_accuracy(models.adv.spec, models.adv.params,
                                                models.adv.pipeline, attack_eval, attack,
                                                eval_seed, 100);
    const double adv_clean = clean_accuracy(models.adv.spec, models.adv.params,
                                            models.adv.pipeline, true, data.test, 100);
    const bool pass = adv_attacked >= all_three_attacked - 1.0 && adv_clean >= 98.0;
    report(3, pass,
           fmt("adversarially trained all-three: attacked %.2f%% (>= %.2f - 1), clean %.2f%% (>= "
               "98)",
               adv_attacked, all_three_attacked, adv_clean));
  }

  // --- Criterion 4: epsilon sweep shape -----------------------------------
  {
    const std::vector<double> eps = {0.1, 0.2, 0.3, 0.4, 0.5};
    const std::vector<SweepRow> rows =
        epsilon_sweep(models.all_three, attack_eval, eps, attack, eval_seed, 100);
    const double drop = rows.front().report.attacked_accuracy - rows.back().report.attacked_accuracy;
    bool monotone = true;
    for (size_t i = 1; i < rows.size(); ++i)
      if (rows[i].report.attacked_accuracy > rows[i - 1].report.attacked_accuracy + 1.0)
        monotone = false;
    std::string series;
    for (const SweepRow& r : rows) series += fmt("%.1f:%.2f%% ", r.value, r.report.attacked_accuracy);
    const bool pass = drop <= 20.0 && monotone;
    report(4, pass,
           fmt("sweep %s- drop eps 0.1->0.5 is %.2f points (<= 20), monotone within 1.0: %s",
               series.c_str(), drop, monotone ? "yes" : "no"));
  }

  // --- Criterion 5: alpha metric exactness --------------------------------
  {
    const auto a = alpha_ratio(99.43, 98.65);
    const auto b = alpha_ratio(99.47, 98.61);
    const bool pass = a && b && std::fabs(*a - 49.80) <= 0.01 && std::fabs(*b - 49.78) <= 0.01;
    report(5, pass, fmt("alpha(99.43,98.65)=%.4f (49.80 +- 0.01), alpha(99.47,98.61)=%.4f (49.78 +- 0.01)",
                        a.value_or(-1), b.value_or(-1)));
  }

  // --- Criterion 6: gradient correctness -----------------------------------
  {
    const double t0 = now_s();
    int instances = 0;
    double worst = 0.0;
    std::string worst_name = "-";
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      for (const auto& inst : rpnet::testing::make_fd_instances(seed)) {
        const double err = finite_diff_check(inst.build, inst.x, inst.h);
        if (err > worst) {
          worst = err;
          worst_name = inst.name;
        }
        ++instances;
      }
    }
    // end-to-end input gradient of a small encoded conv model; dyadic
    // draws keep float32 arithmetic exact, kink-straddling draws resample
    int e2e = 0;
    for (uint64_t seed = 0; e2e < 20 && seed < 2000; ++seed) {
      const auto inst = rpnet::testing::make_e2e_fd_instance(seed);
      if (!inst) continue;
      const double err = finite_diff_check(inst->build, inst->x, inst->h);
      if (err > worst) {
        worst = err;
        worst_name = inst->name;
      }
      ++e2e;
      ++instances;
    }
    const double elapsed = now_s() - t0;
    const bool pass = worst <= 1e-3 && elapsed <= 120.0;
    report(6, pass,
           fmt("%d finite-difference instances (incl. %d end-to-end), worst %.2e at %s, %.1f s "
               "(<= 120)",
               instances, e2e, worst, worst_name.c_str(), elapsed));
  }

  // --- Criterion 7: LS-PGA vs exhaustive enumeration ----------------------
  {
    int oracle_hits = 0, attack_hits = 0, violations = 0;
    for (uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(mix_seed(seed, 0xacce55));
      ModelSpec spec;
      spec.input_height = 2;
      spec.input_width = 2;
      spec.input_channels = 3;
      spec.conv1_filters = 0;
      spec.conv2_filters = 0;
      spec.dense_units = 0;
      spec.num_classes = 3;
      spec.profile_name = "toy";
      Parameters params;
      params.tensors["dense2.weight"] =
          rpnet::testing::random_signed_tensor(rng, {12, 3}, 0.2f, 1.5f);
      params.tensors["dense2.bias"] = rpnet::testing::random_signed_tensor(rng, {3}, 0.0f, 0.3f);
      const Pipeline pipeline = pipeline_from_name("none", 3);
      Tensor image = rpnet::testing::random_tensor(rng, {1, 1, 2, 2}, 0.0f, 1.0f);
      const float eps = 0.3f;
      const EncodedBatch clean = encode_batch(pipeline, image).first;
      const std::vector<int32_t> label = {
          argmax_classes(predict_logits(spec, params, clean.thermo))[0]};
      const LevelMask mask = build_level_mask(pipeline, image, eps, 3);

      // exhaustive enumeration over reachable encodings
      bool oracle = false;
      {
        std::vector<std::vector<int>> choices(4);
        for (int p = 0; p < 4; ++p)
          for (int level = 0; level < 3; ++level)
            if (mask.at(level * 4 + p)) choices[static_cast<size_t>(p)].push_back(level);
        std::vector<size_t> idx(4, 0);
        for (;;) {
          IntTensor levels({1, 2, 2});
          for (int p = 0; p < 4; ++p)
            levels[p] = choices[static_cast<size_t>(p)][idx[static_cast<size_t>(p)]];
          EncodedBatch enc = thermometer_encode(levels, 3);
          if (argmax_classes(predict_logits(spec, params, enc.thermo))[0] != label[0]) {
            oracle = true;
            break;
          }
          int p = 0;
          while (p < 4 && ++idx[static_cast<size_t>(p)] == choices[static_cast<size_t>(p)].size()) {
            idx[static_cast<size_t>(p)] = 0;
            ++p;
          }
          if (p == 4) break;
        }
      }

      AttackConfig cfg = paper_attack();
      cfg.epsilon = eps;
      cfg.levels = 3;
      cfg.restarts = 10;
      const LspgaResult r = lspga_attack(spec, params, pipeline, image, label, cfg, seed);
      for (int64_t p = 0; p < 4; ++p)
        if (!mask.at(static_cast<int64_t>(r.encoded.levels[p]) * 4 + p)) ++violations;
      if (oracle) {
        ++oracle_hits;
        if (r.success[0]) ++attack_hits;
      }
    }
    const double rate = oracle_hits ? static_cast<double>(attack_hits) / oracle_hits : 1.0;
    const bool pass = rate >= 0.8 && violations == 0;
    report(7, pass,
           fmt("lspga found %d of %d oracle-attackable toys (%.1f%%, >= 80%%), mask violations %d",
               attack_hits, oracle_hits, 100.0 * rate, violations));
  }

  // --- Criterion 8: pixel distribution spread ------------------------------
  {
    auto [before, after] = pixel_histogram(data.test, pipeline_from_name("all-three"), 100);
    const double ratio = after.stddev / before.stddev;
    const bool pass = ratio >= 2.0;
    report(8, pass, fmt("pixel std before %.1f, after %.1f, ratio %.2f (>= 2)", before.stddev,
                        after.stddev, ratio));
  }

  // --- Criterion 9: format round trips -------------------------------------
  {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rpnet_acceptance";
    fs::create_directories(dir);
    bool pass = true;
    std::string detail;

    Dataset sample = slice(data.test, 0, 256);
    save_idx(sample, (dir / "img").string(), (dir / "lab").string());
    Dataset back = load_idx((dir / "img").string(), (dir / "lab").string());
    if (back.images.data != sample.images.data || back.labels != sample.labels) {
      pass = false;
      detail += "idx round trip differs; ";
    }

    save_checkpoint((dir / "ckpt.bin").string(), models.all_three);
    ModelBundle loaded = load_checkpoint((dir / "ckpt.bin").string());
    for (const auto& [name, t] : models.all_three.params.tensors)
      if (loaded.params.tensors.at(name).data != t.data) {
        pass = false;
        detail += "checkpoint tensor \"" + name + "\" differs; ";
        break;
      }

    for (int level = 0; level < 15; ++level) {
      IntTensor l({1, 1, 1});
      l[0] = level;
      if (thermometer_decode(thermometer_encode(l, 15).thermo)[0] != level) {
        pass = false;
        detail += "thermometer round trip broke at level " + std::to_string(level) + "; ";
      }
    }

    SweepRow row;
    row.param = "epsilon";
    row.value = 0.3;
    row.report.pipeline = "all-three";
    row.report.attack = attack;
    const std::string csv = report_csv({row});
    const std::string header = csv.substr(0, csv.find('\n'));
    if (header !=
        "param,value,pipeline,adv_trained,clean_acc,attacked_acc,alpha,epsilon,delta,xi,steps,"
        "restarts,seed,seconds") {
      pass = false;
      detail += "csv header mismatch; ";
    }
    report(9, pass, pass ? "idx, checkpoint, thermometer, and csv header round trips exact"
                         : detail);
  }

  // --- Criterion 10: end-to-end determinism --------------------------------
  {
    auto run_once = [&]() {
      Scale tiny = scale;
      tiny.epochs = 1;
      const Dataset tiny_train = subset(train_set, 2000, 3);
      ModelBundle bundle = train_bundle(tiny_train, "all-three", tiny, false, 17);
      const Dataset tiny_eval = slice(data.test, 0, 200);
      const std::vector<SweepRow> rows =
          epsilon_sweep(bundle, tiny_eval, {0.3}, attack, 17, 100);
      return std::make_pair(rows[0].report, report_csv(rows));
    };
    auto strip_seconds = [](std::string csv) {
      std::string out;
      size_t start = 0;
      while (start < csv.size()) {
        size_t end = csv.find('\n', start);
        if (end == std::string::npos) end = csv.size();
        const std::string line = csv.substr(start, end - start);
        out += line.substr(0, line.rfind(',')) + "\n";
        start = end + 1;
      }
      return out;
    };
    const auto [report_a, csv_a] = run_once();
    const auto [report_b, csv_b] = run_once();
    const bool pass = report_a.clean_accuracy == report_b.clean_accuracy &&
                      report_a.attacked_accuracy == report_b.attacked_accuracy &&
                      strip_seconds(csv_a) == strip_seconds(csv_b);
    report(10, pass,
           fmt("two seeded train+eval runs: clean %.4f/%.4f, attacked %.4f/%.4f, csv bytes %s",
               report_a.clean_accuracy, report_b.clean_accuracy, report_a.attacked_accuracy,
               report_b.attacked_accuracy,
               strip_seconds(csv_a) == strip_seconds(csv_b) ? "equal" : "DIFFER"));
  }

  std::printf("%d of 10 criteria passed\n", 10 - g_failures);
  return g_failures;
}
