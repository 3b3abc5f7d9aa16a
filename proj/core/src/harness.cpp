#include "rpnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace rpnet {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Tensor model_input_for(const Pipeline& pipeline, bool encoded, const Tensor& images) {
  if (encoded) return encode_batch(pipeline, images).first.thermo;
  if (pipeline.stages.empty()) return images;
  return run_pipeline(pipeline, images).first;
}

}  // namespace

double clean_accuracy(const ModelSpec& spec, const Parameters& params, const Pipeline& pipeline,
                      bool encoded, const Dataset& data, int batch_size) {
  if (data.count() == 0) throw ConfigError("clean_accuracy: empty dataset");
  int64_t correct = 0;
  for (const Batch& b : make_batches(data, batch_size, 0, /*shuffle=*/false)) {
    const Tensor input = model_input_for(pipeline, encoded, b.images);
    const std::vector<int32_t> pred = argmax_classes(predict_logits(spec, params, input));
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == b.labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.count());
}

std::optional<double> alpha_ratio(double x, double y) {
  if (x + y <= 0.0) return std::nullopt;
  return 100.0 * y / (x + y);
}

std::vector<SweepRow> epsilon_sweep(const ModelBundle& bundle, const Dataset& data,
                                    const std::vector<double>& epsilons, AttackConfig base,
                                    uint64_t seed, int batch_size) {
  if (!std::is_sorted(epsilons.begin(), epsilons.end()))
    throw ConfigError("epsilon sweep: values must be sorted ascending");
  const double clean =
      clean_accuracy(bundle.spec, bundle.params, bundle.pipeline, bundle.encoded, data, batch_size);
  std::vector<SweepRow> rows;
  for (double eps : epsilons) {
    AttackConfig cfg = base;
    cfg.epsilon = static_cast<float>(eps);
    const double t0 = now_seconds();
    const double attacked =
        attack_accuracy(bundle.spec, bundle.params, bundle.pipeline, data, cfg, seed, batch_size);
    SweepRow row;
    row.param = "epsilon";
    row.value = eps;
    row.report.pipeline = pipeline_name(bundle.pipeline);
    row.report.adv_trained = bundle.adv_trained;
    row.report.clean_accuracy = clean;
    row.report.attacked_accuracy = attacked;
    row.report.alpha = alpha_ratio(clean, attacked);
    row.report.attack = cfg;
    row.report.seed = seed;
    row.report.seconds = now_seconds() - t0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepRow> batch_size_sweep(const ModelBundle& bundle, const Dataset& data,
                                       const std::vector<int>& sizes, AttackConfig base,
                                       uint64_t seed) {
  if (!std::is_sorted(sizes.begin(), sizes.end()))
    throw ConfigError("batch size sweep: values must be sorted ascending");
  std::vector<SweepRow> rows;
  for (int size : sizes) {
    if (size < 1) throw ConfigError("batch size sweep: sizes must be >= 1");
    const double t0 = now_seconds();
    const double clean =
        clean_accuracy(bundle.spec, bundle.params, bundle.pipeline, bundle.encoded, data, size);
    const double attacked =
        attack_accuracy(bundle.spec, bundle.params, bundle.pipeline, data, base, seed, size);
    SweepRow row;
    row.param = "batch-size";
    row.value = static_cast<double>(size);
    row.report.pipeline = pipeline_name(bundle.pipeline);
    row.report.adv_trained = bundle.adv_trained;
    row.report.clean_accuracy = clean;
    row.report.attacked_accuracy = attacked;
    row.report.alpha = alpha_ratio(clean, attacked);
    row.report.attack = base;
    row.report.seed = seed;
    row.report.seconds = now_seconds() - t0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::pair<HistogramReport, HistogramReport> pixel_histogram(const Dataset& data,
                                                            const Pipeline& pipeline,
                                                            int batch_size) {
  if (data.count() == 0) throw ConfigError("pixel_histogram: empty dataset");
  HistogramReport before, after;
  double bsum = 0.0, bsq = 0.0, asum = 0.0, asq = 0.0;
  int64_t n = 0;

  auto bin_of = [](double v01) {
    int bin = static_cast<int>(std::floor(v01 * 256.0));
    return std::clamp(bin, 0, 255);
  };

  for (const Batch& b : make_batches(data, batch_size, 0, /*shuffle=*/false)) {
    for (float v : b.images.data) {
      before.bins[static_cast<size_t>(bin_of(v))]++;
      const double s = 255.0 * v;
      bsum += s;
      bsq += s * s;
    }
    auto [processed, stats] = run_pipeline(pipeline, b.images);
    const double range = static_cast<double>(stats.post_max) - stats.post_min;
    for (float v : processed.data) {
      const double rescaled = range > 0.0 ? (v - stats.post_min) / range : 0.0;
      after.bins[static_cast<size_t>(bin_of(rescaled))]++;
      const double s = 255.0 * v;
      asum += s;
      asq += s * s;
    }
    n += b.images.numel();
  }

  auto finish = [n](HistogramReport& h, double sum, double sq) {
    h.mean = sum / static_cast<double>(n);
    h.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - h.mean * h.mean));
    double csum = 0.0;
    for (int64_t c : h.bins) csum += static_cast<double>(c);
    const double cmean = csum / 256.0;
    double cvar = 0.0;
    for (int64_t c : h.bins) {
      const double d = static_cast<double>(c) - cmean;
      cvar += d * d;
    }
    h.count_stddev = std::sqrt(cvar / 256.0);
  };
  finish(before, bsum, bsq);
  finish(after, asum, asq);
  return {before, after};
}

namespace {

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw ConfigError("report: no rows");
  std::string out =
      "param,value,pipeline,adv_trained,clean_acc,attacked_acc,alpha,epsilon,delta,xi,steps,"
      "restarts,seed,seconds\n";
  for (const SweepRow& r : rows) {
    out += r.param + "," + fmt4(r.value) + "," + r.report.pipeline + ",";
    out += r.report.adv_trained ? "1," : "0,";
    out += fmt4(r.report.clean_accuracy) + "," + fmt4(r.report.attacked_accuracy) + ",";
    out += (r.report.alpha ? fmt4(*r.report.alpha) : "") + ",";
    out += fmt4(r.report.attack.epsilon) + "," + fmt4(r.report.attack.delta) + "," +
           fmt4(r.report.attack.xi) + ",";
    out += std::to_string(r.report.attack.steps) + "," + std::to_string(r.report.attack.restarts) +
           "," + std::to_string(r.report.seed) + "," + fmt4(r.report.seconds) + "\n";
  }
  return out;
}

std::string report_json(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw ConfigError("report: no rows");
  nlohmann::json arr = nlohmann::json::array();
  for (const SweepRow& r : rows) {
    nlohmann::json o;
    o["param"] = r.param;
    o["value"] = r.value;
    o["pipeline"] = r.report.pipeline;
    o["adv_trained"] = r.report.adv_trained;
    o["clean_acc"] = r.report.clean_accuracy;
    o["attacked_acc"] = r.report.attacked_accuracy;
    if (r.report.alpha)
      o["alpha"] = *r.report.alpha;
    else
      o["alpha"] = nullptr;
    o["epsilon"] = r.report.attack.epsilon;
    o["delta"] = r.report.attack.delta;
    o["xi"] = r.report.attack.xi;
    o["steps"] = r.report.attack.steps;
    o["restarts"] = r.report.attack.restarts;
    o["seed"] = r.report.seed;
    o["seconds"] = r.report.seconds;
    arr.push_back(std::move(o));
  }
  return arr.dump(2) + "\n";
}

void emit_report(const std::vector<SweepRow>& rows, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report \"" + path + "\"");
  out << (format == ReportFormat::Csv ? report_csv(rows) : report_json(rows));
  if (!out) throw DataError("write failed for report \"" + path + "\"");
}

ReportFormat report_format_for_path(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return ReportFormat::Csv;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return ReportFormat::Json;
  throw ConfigError("report path \"" + path + "\" must end in .csv or .json");
}

}  // namespace rpnet
