// rpnet command line: train/eval/sweep/attack/histogram plus a dataset
// helper. Flags can be preloaded from a config file of plain `key = value`
// lines (keys mirror the long flag names); explicit flags win, unknown keys
// are errors. Exit codes: 0 ok, 2 usage/config, 3 data, 4 numeric failure.

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rpnet/checkpoint.hpp"
#include "rpnet/rng.hpp"
#include "rpnet/harness.hpp"
#include "rpnet/trainer.hpp"

using namespace rpnet;

namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// All long flag names any subcommand understands; config keys must be one of
// these (keys that do not apply to the active subcommand are ignored).
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data-dir", "pipeline", "profile",  "epochs",  "batch-size", "adv",     "adv-fraction",
      "epsilon",  "delta",    "xi",       "steps",   "seed",       "out",     "ckpt",
      "attack",   "restarts", "report",   "param",   "values",     "method",  "alpha-step",
      "iters",    "levels",   "lr",       "no-encode", "workers",  "count",   "optimizer",
      "train-count", "test-count", "synth-out", "urls"};
  return keys;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key = value: " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_keys().count(key))
      throw ConfigError("unknown config key \"" + key + "\" (line " + std::to_string(lineno) + ")");
    out[key] = value;
  }
  return out;
}

struct ConfigDefaults {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string str(const std::string& key, std::string fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
  template <typename T>
  T num(const std::string& key, T fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::stringstream ss(it->second);
    T v;
    if (!(ss >> v)) throw ConfigError("config key \"" + key + "\" is not numeric: " + it->second);
    return v;
  }
  bool flag(const std::string& key, bool fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    return it->second == "1" || it->second == "true" || it->second == "yes" || it->second == "on";
  }
};

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad value \"" + tok + "\" in --values");
    }
  }
  if (out.empty()) throw ConfigError("--values is empty");
  return out;
}

Dataset eval_slice(const Dataset& test, int count) {
  if (count <= 0 || count >= test.count()) return test;
  return slice(test, 0, count);
}

void print_report_rows(const std::vector<SweepRow>& rows) {
  for (const SweepRow& r : rows) {
    std::printf("%s=%g pipeline=%s clean=%.2f%% attacked=%.2f%%", r.param.c_str(), r.value,
                r.report.pipeline.c_str(), r.report.clean_accuracy, r.report.attacked_accuracy);
    if (r.report.alpha) std::printf(" alpha=%.2f", *r.report.alpha);
    std::printf(" (%.1f s)\n", r.report.seconds);
  }
}

void write_histogram_report(const HistogramReport& before, const HistogramReport& after,
                            const std::string& path) {
  const ReportFormat format = report_format_for_path(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report \"" + path + "\"");
  if (format == ReportFormat::Csv) {
    out << "bin,before_count,after_count\n";
    for (int i = 0; i < 256; ++i)
      out << i << "," << before.bins[static_cast<size_t>(i)] << ","
          << after.bins[static_cast<size_t>(i)] << "\n";
  } else {
    nlohmann::json j;
    for (auto [name, h] : {std::pair<const char*, const HistogramReport&>{"before", before},
                           {"after", after}}) {
      nlohmann::json o;
      o["bins"] = h.bins;
      o["mean"] = h.mean;
      o["stddev"] = h.stddev;
      o["count_stddev"] = h.count_stddev;
      j[name] = std::move(o);
    }
    out << j.dump(2) << "\n";
  }
}

int run(int argc, char** argv) {
  // --config is applied before CLI11 parses, so explicit flags override it.
  ConfigDefaults conf;
  {
    std::vector<std::string> args(argv + 1, argv + argc);
    for (size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--config") conf.values = read_config_file(args[i + 1]);
  }

  CLI::App app{"robust-processing lab: discretized-input defense, LS-PGA/FGSM attacks, sweeps"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "config file of key = value lines")
      ->expected(1);

  // train ------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  std::string tr_data = conf.str("data-dir", "");
  std::string tr_pipeline = conf.str("pipeline", "all-three");
  std::string tr_profile = conf.str("profile", "paper");
  std::string tr_out = conf.str("out", "model.ckpt");
  std::string tr_optimizer = conf.str("optimizer", "adam");
  TrainConfig tr_cfg;
  tr_cfg.epochs = conf.num("epochs", 5);
  tr_cfg.batch_size = conf.num("batch-size", 100);
  tr_cfg.learning_rate = conf.num("lr", 1e-3f);
  tr_cfg.adversarial = conf.flag("adv", false);
  tr_cfg.adv_fraction = conf.num("adv-fraction", 0.5f);
  tr_cfg.seed = conf.num<uint64_t>("seed", 0);
  tr_cfg.attack.epsilon = conf.num("epsilon", 0.3f);
  tr_cfg.attack.delta = conf.num("delta", 1.2f);
  tr_cfg.attack.xi = conf.num("xi", 1.0f);
  tr_cfg.attack.steps = conf.num("steps", 7);
  tr_cfg.attack.levels = conf.num("levels", 15);
  tr_cfg.attack.restarts = conf.num("restarts", 1);
  bool tr_no_encode = conf.flag("no-encode", false);
  int tr_count = conf.num("count", 0);
  int tr_workers = conf.num("workers", 0);
  train_cmd->add_option("--data-dir", tr_data, "directory with the IDX files")->required();
  train_cmd->add_option("--pipeline", tr_pipeline,
                        "none|tanh+bn|tanh+smooth|smooth+bn|all-three");
  train_cmd->add_option("--profile", tr_profile, "paper|fast");
  train_cmd->add_option("--epochs", tr_cfg.epochs);
  train_cmd->add_option("--batch-size", tr_cfg.batch_size);
  train_cmd->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  train_cmd->add_option("--optimizer", tr_optimizer, "adam|sgd");
  train_cmd->add_flag("--adv", tr_cfg.adversarial, "adversarial training (LS-PGA mix)");
  train_cmd->add_option("--adv-fraction", tr_cfg.adv_fraction);
  train_cmd->add_option("--epsilon", tr_cfg.attack.epsilon);
  train_cmd->add_option("--delta", tr_cfg.attack.delta);
  train_cmd->add_option("--xi", tr_cfg.attack.xi);
  train_cmd->add_option("--steps", tr_cfg.attack.steps);
  train_cmd->add_option("--levels", tr_cfg.attack.levels, "quantization levels k");
  train_cmd->add_option("--restarts", tr_cfg.attack.restarts);
  train_cmd->add_option("--seed", tr_cfg.seed);
  train_cmd->add_option("--out", tr_out, "checkpoint path");
  train_cmd->add_flag("--no-encode", tr_no_encode,
                      "continuous-input model (no quantization/thermometer)");
  train_cmd->add_option("--count", tr_count, "train on a subset of this many images (0 = all)");
  train_cmd->add_option("--workers", tr_workers, "worker threads (0 = library default)");

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "clean (and optionally attacked) accuracy");
  std::string ev_ckpt = conf.str("ckpt", "");
  std::string ev_data = conf.str("data-dir", "");
  std::string ev_report = conf.str("report", "");
  bool ev_attack = conf.flag("attack", false);
  AttackConfig ev_cfg;
  ev_cfg.epsilon = conf.num("epsilon", 0.3f);
  ev_cfg.delta = conf.num("delta", 1.2f);
  ev_cfg.xi = conf.num("xi", 1.0f);
  ev_cfg.steps = conf.num("steps", 7);
  ev_cfg.restarts = conf.num("restarts", 1);
  int ev_batch = conf.num("batch-size", 100);
  int ev_count = conf.num("count", 0);
  uint64_t ev_seed = conf.num<uint64_t>("seed", 0);
  int ev_workers = conf.num("workers", 0);
  eval_cmd->add_option("--ckpt", ev_ckpt)->required();
  eval_cmd->add_option("--data-dir", ev_data)->required();
  eval_cmd->add_flag("--attack", ev_attack, "also run LS-PGA and report attacked accuracy");
  eval_cmd->add_option("--epsilon", ev_cfg.epsilon);
  eval_cmd->add_option("--delta", ev_cfg.delta);
  eval_cmd->add_option("--xi", ev_cfg.xi);
  eval_cmd->add_option("--steps", ev_cfg.steps);
  eval_cmd->add_option("--restarts", ev_cfg.restarts);
  eval_cmd->add_option("--batch-size", ev_batch);
  eval_cmd->add_option("--count", ev_count, "evaluate on the first N test images (0 = all)");
  eval_cmd->add_option("--seed", ev_seed);
  eval_cmd->add_option("--report", ev_report, "write a CSV/JSON report row");
  eval_cmd->add_option("--workers", ev_workers);

  // sweep ------------------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "epsilon or batch-size sweep");
  std::string sw_ckpt = conf.str("ckpt", "");
  std::string sw_data = conf.str("data-dir", "");
  std::string sw_param = conf.str("param", "epsilon");
  std::string sw_values = conf.str("values", "");
  std::string sw_report = conf.str("report", "");
  AttackConfig sw_cfg;
  sw_cfg.epsilon = conf.num("epsilon", 0.3f);
  sw_cfg.delta = conf.num("delta", 1.2f);
  sw_cfg.xi = conf.num("xi", 1.0f);
  sw_cfg.steps = conf.num("steps", 7);
  sw_cfg.restarts = conf.num("restarts", 1);
  int sw_batch = conf.num("batch-size", 100);
  int sw_count = conf.num("count", 0);
  uint64_t sw_seed = conf.num<uint64_t>("seed", 0);
  int sw_workers = conf.num("workers", 0);
  sweep_cmd->add_option("--ckpt", sw_ckpt)->required();
  sweep_cmd->add_option("--data-dir", sw_data)->required();
  sweep_cmd->add_option("--param", sw_param, "epsilon|batch-size");
  sweep_cmd->add_option("--values", sw_values, "comma-separated sweep values")->required();
  sweep_cmd->add_option("--epsilon", sw_cfg.epsilon, "attack epsilon for batch-size sweeps");
  sweep_cmd->add_option("--delta", sw_cfg.delta);
  sweep_cmd->add_option("--xi", sw_cfg.xi);
  sweep_cmd->add_option("--steps", sw_cfg.steps);
  sweep_cmd->add_option("--restarts", sw_cfg.restarts);
  sweep_cmd->add_option("--batch-size", sw_batch, "evaluation batch size for epsilon sweeps");
  sweep_cmd->add_option("--count", sw_count);
  sweep_cmd->add_option("--seed", sw_seed);
  sweep_cmd->add_option("--report", sw_report)->required();
  sweep_cmd->add_option("--workers", sw_workers);

  // attack -----------------------------------------------------------------
  auto* attack_cmd = app.add_subcommand("attack", "run fgsm/ifgsm/lspga against a checkpoint");
  std::string at_ckpt = conf.str("ckpt", "");
  std::string at_data = conf.str("data-dir", "");
  std::string at_method = conf.str("method", "lspga");
  std::string at_report = conf.str("report", "");
  AttackConfig at_cfg;
  at_cfg.epsilon = conf.num("epsilon", 0.3f);
  at_cfg.delta = conf.num("delta", 1.2f);
  at_cfg.xi = conf.num("xi", 1.0f);
  at_cfg.steps = conf.num("steps", 7);
  at_cfg.restarts = conf.num("restarts", 1);
  float at_alpha = conf.num("alpha-step", 0.01f);
  int at_iters = conf.num("iters", 10);
  int at_batch = conf.num("batch-size", 100);
  int at_count = conf.num("count", 0);
  uint64_t at_seed = conf.num<uint64_t>("seed", 0);
  int at_workers = conf.num("workers", 0);
  attack_cmd->add_option("--ckpt", at_ckpt)->required();
  attack_cmd->add_option("--data-dir", at_data)->required();
  attack_cmd->add_option("--method", at_method, "fgsm|ifgsm|lspga");
  attack_cmd->add_option("--epsilon", at_cfg.epsilon);
  attack_cmd->add_option("--alpha-step", at_alpha, "per-iteration step for ifgsm");
  attack_cmd->add_option("--iters", at_iters, "iterations for ifgsm");
  attack_cmd->add_option("--delta", at_cfg.delta);
  attack_cmd->add_option("--xi", at_cfg.xi);
  attack_cmd->add_option("--steps", at_cfg.steps);
  attack_cmd->add_option("--restarts", at_cfg.restarts);
  attack_cmd->add_option("--batch-size", at_batch);
  attack_cmd->add_option("--count", at_count);
  attack_cmd->add_option("--seed", at_seed);
  attack_cmd->add_option("--report", at_report);
  attack_cmd->add_option("--workers", at_workers);

  // histogram ---------------------------------------------------------------
  auto* hist_cmd = app.add_subcommand("histogram", "pixel distribution before/after processing");
  std::string hi_data = conf.str("data-dir", "");
  std::string hi_pipeline = conf.str("pipeline", "all-three");
  std::string hi_report = conf.str("report", "");
  int hi_batch = conf.num("batch-size", 100);
  hist_cmd->add_option("--data-dir", hi_data)->required();
  hist_cmd->add_option("--pipeline", hi_pipeline);
  hist_cmd->add_option("--batch-size", hi_batch);
  hist_cmd->add_option("--report", hi_report)->required();

  // dataset -----------------------------------------------------------------
  auto* data_cmd = app.add_subcommand("dataset", "download info and synthetic corpus generation");
  bool ds_urls = conf.flag("urls", false);
  std::string ds_out = conf.str("synth-out", "");
  int ds_train = conf.num("train-count", 60000);
  int ds_test = conf.num("test-count", 10000);
  uint64_t ds_seed = conf.num<uint64_t>("seed", 2024);
  data_cmd->add_flag("--urls", ds_urls, "print official download URLs and sizes");
  data_cmd->add_option("--synth-out", ds_out, "write a synthetic IDX corpus to this directory");
  data_cmd->add_option("--train-count", ds_train);
  data_cmd->add_option("--test-count", ds_test);
  data_cmd->add_option("--seed", ds_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 2;
  }

  auto set_workers = [](int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
  };

  if (*train_cmd) {
    set_workers(tr_workers);
    if (tr_optimizer == "adam")
      tr_cfg.optimizer = TrainConfig::Optimizer::Adam;
    else if (tr_optimizer == "sgd")
      tr_cfg.optimizer = TrainConfig::Optimizer::Sgd;
    else
      throw ConfigError("unknown optimizer \"" + tr_optimizer + "\"");

    MnistData data = load_mnist_dir(tr_data);
    Dataset train_set = tr_count > 0 && tr_count < data.train.count()
                            ? subset(data.train, tr_count, tr_cfg.seed)
                            : std::move(data.train);
    ModelBundle bundle;
    bundle.pipeline = pipeline_from_name(tr_pipeline, tr_cfg.attack.levels);
    bundle.encoded = !tr_no_encode;
    bundle.adv_trained = tr_cfg.adversarial;
    bundle.spec = make_model_spec(tr_profile, bundle.encoded ? bundle.pipeline.levels : 1);

    std::printf("training %s/%s on %d images (%s, %d epochs, batch %d, seed %llu)\n",
                tr_pipeline.c_str(), tr_profile.c_str(), train_set.count(),
                bundle.encoded ? "encoded" : "raw", tr_cfg.epochs, tr_cfg.batch_size,
                static_cast<unsigned long long>(tr_cfg.seed));
    const double t0 = now_s();
    TrainResult result = train(train_set, bundle.pipeline, bundle.encoded, bundle.spec, tr_cfg,
                               &data.test);
    for (const EpochMetrics& m : result.metrics)
      std::printf("epoch %d: train loss %.4f, test accuracy %.2f%%\n", m.epoch, m.train_loss,
                  m.test_accuracy);
    bundle.params = std::move(result.params);
    save_checkpoint(tr_out, bundle);
    std::printf("saved %s after %.1f s\n", tr_out.c_str(), now_s() - t0);
    return 0;
  }

  if (*eval_cmd) {
    set_workers(ev_workers);
    const ModelBundle bundle = load_checkpoint(ev_ckpt);
    ev_cfg.levels = bundle.pipeline.levels;
    const MnistData data = load_mnist_dir(ev_data);
    const Dataset eval_set = eval_slice(data.test, ev_count);

    const double t0 = now_s();
    SweepRow row;
    row.param = "epsilon";
    row.value = ev_cfg.epsilon;
    row.report.pipeline = pipeline_name(bundle.pipeline);
    row.report.adv_trained = bundle.adv_trained;
    row.report.attack = ev_cfg;
    row.report.seed = ev_seed;
    row.report.clean_accuracy = clean_accuracy(bundle.spec, bundle.params, bundle.pipeline,
                                               bundle.encoded, eval_set, ev_batch);
    if (ev_attack) {
      if (!bundle.encoded)
        throw ConfigError("eval --attack needs an encoded checkpoint; use `attack --method fgsm`"
                          " for continuous models");
      row.report.attacked_accuracy = attack_accuracy(bundle.spec, bundle.params, bundle.pipeline,
                                                     eval_set, ev_cfg, ev_seed, ev_batch);
      row.report.alpha = alpha_ratio(row.report.clean_accuracy, row.report.attacked_accuracy);
    }
    row.report.seconds = now_s() - t0;
    print_report_rows({row});
    if (!ev_report.empty()) emit_report({row}, report_format_for_path(ev_report), ev_report);
    return 0;
  }

  if (*sweep_cmd) {
    set_workers(sw_workers);
    const ModelBundle bundle = load_checkpoint(sw_ckpt);
    sw_cfg.levels = bundle.pipeline.levels;
    const MnistData data = load_mnist_dir(sw_data);
    const Dataset eval_set = eval_slice(data.test, sw_count);

    std::vector<double> values = parse_values(sw_values);
    std::sort(values.begin(), values.end());
    std::vector<SweepRow> rows;
    if (sw_param == "epsilon") {
      rows = epsilon_sweep(bundle, eval_set, values, sw_cfg, sw_seed, sw_batch);
    } else if (sw_param == "batch-size") {
      std::vector<int> sizes;
      for (double v : values) {
        if (v < 1 || v != std::floor(v))
          throw ConfigError("batch-size sweep values must be positive integers");
        sizes.push_back(static_cast<int>(v));
      }
      rows = batch_size_sweep(bundle, eval_set, sizes, sw_cfg, sw_seed);
    } else {
      throw ConfigError("unknown sweep param \"" + sw_param + "\" (epsilon|batch-size)");
    }
    print_report_rows(rows);
    emit_report(rows, report_format_for_path(sw_report), sw_report);
    return 0;
  }

  if (*attack_cmd) {
    set_workers(at_workers);
    const ModelBundle bundle = load_checkpoint(at_ckpt);
    at_cfg.levels = bundle.pipeline.levels;
    const MnistData data = load_mnist_dir(at_data);
    const Dataset eval_set = eval_slice(data.test, at_count);

    const double t0 = now_s();
    SweepRow row;
    row.param = "epsilon";
    row.value = at_cfg.epsilon;
    row.report.pipeline = pipeline_name(bundle.pipeline);
    row.report.adv_trained = bundle.adv_trained;
    row.report.attack = at_cfg;
    row.report.seed = at_seed;
    row.report.clean_accuracy = clean_accuracy(bundle.spec, bundle.params, bundle.pipeline,
                                               bundle.encoded, eval_set, at_batch);

    if (at_method == "lspga") {
      if (!bundle.encoded) throw ConfigError("lspga needs an encoded checkpoint");
      row.report.attacked_accuracy = attack_accuracy(bundle.spec, bundle.params, bundle.pipeline,
                                                     eval_set, at_cfg, at_seed, at_batch);
    } else if (at_method == "fgsm" || at_method == "ifgsm") {
      if (bundle.encoded)
        throw ConfigError(at_method + " needs a continuous checkpoint (train --no-encode)");
      if (!bundle.pipeline.stages.empty())
        throw ConfigError(at_method + " supports pipeline \"none\" only");
      int64_t correct = 0;
      for (const Batch& b : make_batches(eval_set, at_batch, 0, false)) {
        const Tensor adv =
            at_method == "fgsm"
                ? fgsm(bundle.spec, bundle.params, b.images, b.labels, at_cfg.epsilon)
                : iterative_fgsm(bundle.spec, bundle.params, b.images, b.labels, at_cfg.epsilon,
                                 at_alpha, at_iters);
        const std::vector<int32_t> pred = argmax_classes(predict_logits(bundle.spec, bundle.params, adv));
        for (size_t i = 0; i < pred.size(); ++i)
          if (pred[i] == b.labels[i]) ++correct;
      }
      row.report.attacked_accuracy = 100.0 * static_cast<double>(correct) / eval_set.count();
    } else {
      throw ConfigError("unknown attack method \"" + at_method + "\" (fgsm|ifgsm|lspga)");
    }
    row.report.alpha = alpha_ratio(row.report.clean_accuracy, row.report.attacked_accuracy);
    row.report.seconds = now_s() - t0;
    std::printf("method=%s\n", at_method.c_str());
    print_report_rows({row});
    if (!at_report.empty()) emit_report({row}, report_format_for_path(at_report), at_report);
    return 0;
  }

  if (*hist_cmd) {
    const MnistData data = load_mnist_dir(hi_data);
    const auto [before, after] =
        pixel_histogram(data.test, pipeline_from_name(hi_pipeline), hi_batch);
    std::printf("before: mean %.2f stddev %.2f | after: mean %.2f stddev %.2f (ratio %.2f)\n",
                before.mean, before.stddev, after.mean, after.stddev,
                after.stddev / before.stddev);
    write_histogram_report(before, after, hi_report);
    return 0;
  }

  if (*data_cmd) {
    if (ds_urls) {
      for (const MnistFileInfo& f : mnist_download_info())
        std::printf("%s  %s  (%llu bytes)\n", f.name, f.url,
                    static_cast<unsigned long long>(f.gz_bytes));
    }
    if (!ds_out.empty()) {
      std::filesystem::create_directories(ds_out);
      Dataset train_set = make_synthetic_digits(ds_train, ds_seed);
      Dataset test_set = make_synthetic_digits(ds_test, mix_seed(ds_seed, 1));
      save_idx(train_set, ds_out + "/train-images-idx3-ubyte", ds_out + "/train-labels-idx1-ubyte");
      save_idx(test_set, ds_out + "/t10k-images-idx3-ubyte", ds_out + "/t10k-labels-idx1-ubyte");
      std::printf("wrote synthetic corpus (%d train / %d test) to %s\n", ds_train, ds_test,
                  ds_out.c_str());
    }
    if (!ds_urls && ds_out.empty())
      throw ConfigError("dataset: nothing to do (use --urls and/or --synth-out DIR)");
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
