#ifndef RPNET_PIPELINE_HPP
#define RPNET_PIPELINE_HPP

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rpnet/tensor.hpp"

namespace rpnet {

enum class StageKind { Tanh, Sigmoid, SmoothMax, SmoothAvg, BatchNorm };

enum class SmoothMode { Max, Avg };

/// Preprocessing recipe applied to raw [0,1] pixel batches before
/// quantization and encoding. Stage order is fixed to construction order;
/// the canonical combinations keep tanh -> smoothing -> batch norm.
struct Pipeline {
  std::vector<StageKind> stages;
  int levels = 15;
  int smoothing_window = 3;
  int smoothing_stride = 3;
  float bn_epsilon = 1e-5f;
};

/// Canonical names: "none", "tanh+bn", "tanh+smooth", "smooth+bn",
/// "all-three" (case-insensitive). Throws ConfigError otherwise.
Pipeline pipeline_from_name(std::string_view name, int levels = 15);
std::string pipeline_name(const Pipeline& p);

/// Scalar statistics of one processed batch. mu/sigma are the batch-norm
/// inputs pooled over every pixel of the batch; post_min/post_max bound the
/// values after all stages and drive the quantizer rescale.
struct BatchStats {
  float mu = 0.0f;
  float sigma = 0.0f;
  float post_min = 0.0f;
  float post_max = 0.0f;
  bool has_bn = false;
};

Tensor apply_tanh(const Tensor& batch);
Tensor apply_sigmoid(const Tensor& batch);

/// Tiles the image into window x window blocks anchored at (0,0) with the
/// given stride and replaces every pixel of a block by the block max (or
/// mean). Border blocks use only the pixels they cover.
Tensor apply_smoothing(const Tensor& batch, SmoothMode mode, int window = 3, int stride = 3);

/// Parameter-free batch normalization: Y = (X - mu) / (sigma + epsilon) with
/// mu/sigma pooled over all pixels of the batch. With batch size 1 this
/// degenerates to per-image normalization.
std::pair<Tensor, BatchStats> apply_batchnorm(const Tensor& batch, float epsilon = 1e-5f);

std::pair<Tensor, BatchStats> run_pipeline(const Pipeline& p, const Tensor& batch);

/// Same stages, but batch norm reuses the mu/sigma frozen in `stats` instead
/// of recomputing them; post_min/post_max in `stats` stay authoritative.
Tensor run_pipeline_frozen(const Pipeline& p, const Tensor& batch, const BatchStats& stats);

/// level = min(floor(k * (v - post_min) / (post_max - post_min)), k-1);
/// a degenerate range maps everything to level 0.
IntTensor quantize(const Tensor& processed, const BatchStats& stats, int k);

/// Thermometer-coded batch: thermo[i] = 1 iff i >= level, so level 0 is all
/// ones and level k-1 has a single trailing one.
struct EncodedBatch {
  IntTensor levels;  // [B,H,W]
  Tensor thermo;     // [B,k,H,W], entries in {0,1}
  int k = 0;
};

EncodedBatch thermometer_encode(const IntTensor& levels, int k);

/// Recovers levels from a thermometer tensor [B,k,H,W]; rejects words that
/// are not of the form 0...01...1.
IntTensor thermometer_decode(const Tensor& thermo);

/// run_pipeline + quantize + thermometer_encode in one call.
std::pair<EncodedBatch, BatchStats> encode_batch(const Pipeline& p, const Tensor& batch);

/// Checkpoint descriptor: canonical pipeline name plus ";k=<levels>", with
/// ";raw" when the model consumes continuous pixels instead of thermometer
/// planes and ";adv" when it was adversarially trained.
struct PipelineDescriptor {
  Pipeline pipeline;
  bool encoded = true;
  bool adv_trained = false;
};

std::string make_pipeline_descriptor(const Pipeline& p, bool encoded, bool adv_trained);
PipelineDescriptor parse_pipeline_descriptor(const std::string& descriptor);

}  // namespace rpnet

#endif  // RPNET_PIPELINE_HPP
