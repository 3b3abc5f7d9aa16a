#ifndef RPNET_DATAIO_HPP
#define RPNET_DATAIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rpnet/tensor.hpp"

namespace rpnet {

/// Images [N,1,28,28] in [0,1], labels in [0,10).
struct Dataset {
  Tensor images;
  std::vector<int32_t> labels;

  int count() const { return images.rank() > 0 ? images.shape[0] : 0; }
};

/// Parses IDX pairs (big-endian magic 0x803 images / 0x801 labels); gzip
/// inputs are detected by their 0x1f8b prefix. Pixels are divided by 255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes the dataset back as uncompressed IDX (pixels rounded to bytes).
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

/// Loads the conventional four-file layout from a directory, accepting
/// either bare or .gz names. Returns {train, test}; when the train file
/// holds 60000 rows the last 5000 are reserved for validation and the
/// returned train split holds the first 55000.
struct MnistData {
  Dataset train;
  Dataset test;
  Dataset validation;  // empty unless the 60000-row layout was detected
};
MnistData load_mnist_dir(const std::string& dir);

struct MnistFileInfo {
  const char* name;
  const char* url;
  uint64_t gz_bytes;
};
/// Official distribution file names, URLs, and gzip sizes, for the CLI
/// download helper. The library itself never touches the network.
const std::vector<MnistFileInfo>& mnist_download_info();

struct Batch {
  Tensor images;
  std::vector<int32_t> labels;
};

/// Splits the dataset into batches; the last partial batch is kept. With
/// shuffle the order is a seed-deterministic permutation.
std::vector<Batch> make_batches(const Dataset& ds, int batch_size, uint64_t seed, bool shuffle);

/// Deterministic uniform sample without replacement. For count >= 1000 the
/// label histogram is kept within +-20% of uniform by resampling with
/// derived seeds.
Dataset subset(const Dataset& ds, int count, uint64_t seed);

/// Contiguous slice [start, start+count).
Dataset slice(const Dataset& ds, int start, int count);

/// Procedural 28x28 digit corpus for hermetic runs: ten stroke-drawn glyph
/// classes with per-sample affine jitter and pixel noise, quantized to bytes
/// so that IDX round trips are exact. Labels cycle 0..9.
Dataset make_synthetic_digits(int count, uint64_t seed);

}  // namespace rpnet

#endif  // RPNET_DATAIO_HPP
