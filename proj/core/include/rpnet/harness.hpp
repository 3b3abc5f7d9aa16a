#ifndef RPNET_HARNESS_HPP
#define RPNET_HARNESS_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "rpnet/attack.hpp"
#include "rpnet/dataio.hpp"
#include "rpnet/model.hpp"
#include "rpnet/pipeline.hpp"

namespace rpnet {

/// A trained model together with the preprocessing it was trained for.
struct ModelBundle {
  ModelSpec spec;
  Pipeline pipeline;
  bool encoded = true;      // thermometer planes vs raw pixels
  bool adv_trained = false;
  Parameters params;
};

struct EvalReport {
  std::string pipeline;
  bool adv_trained = false;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  std::optional<double> alpha;
  AttackConfig attack;
  uint64_t seed = 0;
  double seconds = 0.0;
};

struct SweepRow {
  std::string param;
  double value = 0.0;
  EvalReport report;
};

/// Argmax accuracy (percent) over pipeline-processed batches. For encoded
/// bundles each evaluation batch is normalized/quantized with its own stats.
double clean_accuracy(const ModelSpec& spec, const Parameters& params, const Pipeline& pipeline,
                      bool encoded, const Dataset& data, int batch_size = 100);

/// 100 * y / (x + y); absent when x + y = 0.
std::optional<double> alpha_ratio(double x, double y);

/// One row per epsilon (ascending); delta/xi/steps fixed, clean accuracy
/// computed once and echoed in every row.
std::vector<SweepRow> epsilon_sweep(const ModelBundle& bundle, const Dataset& data,
                                    const std::vector<double>& epsilons, AttackConfig base,
                                    uint64_t seed, int batch_size = 100);

/// Attacked/clean accuracy with the evaluation batch size swept; batch-norm
/// statistics are recomputed per batch size (size 1 degenerates to per-image
/// normalization).
std::vector<SweepRow> batch_size_sweep(const ModelBundle& bundle, const Dataset& data,
                                       const std::vector<int>& sizes, AttackConfig base,
                                       uint64_t seed);

/// Pixel-value distribution on the 0..255 axis. Bins are affinely rescaled
/// into [0,255] for display; mean/stddev are taken on the common x255 scale
/// (matching the raw side), and count_stddev is the spread of the 256 bin
/// counts, emitted for inspection.
struct HistogramReport {
  std::array<int64_t, 256> bins{};
  double mean = 0.0;
  double stddev = 0.0;
  double count_stddev = 0.0;
};

std::pair<HistogramReport, HistogramReport> pixel_histogram(const Dataset& data,
                                                            const Pipeline& pipeline,
                                                            int batch_size = 100);

enum class ReportFormat { Csv, Json };

std::string report_csv(const std::vector<SweepRow>& rows);
std::string report_json(const std::vector<SweepRow>& rows);
void emit_report(const std::vector<SweepRow>& rows, ReportFormat format, const std::string& path);

/// Report format chosen from the file suffix (.csv / .json).
ReportFormat report_format_for_path(const std::string& path);

}  // namespace rpnet

#endif  // RPNET_HARNESS_HPP
